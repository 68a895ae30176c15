import csv
import json

import numpy as np
import pytest

from nvcomparator.dsp import SquareWaveProtocol
from nvcomparator.noise import NoiseModel
from nvcomparator.plotting import render_figures
from nvcomparator.report import (
    PLOT_HEADERS,
    CampaignReport,
    emit_plotdata,
    quantity,
    read_report,
    sequence,
    write_report,
)
from nvcomparator.simulation import (
    ACDrive,
    ComparatorConfig,
    run_ac_campaign,
    run_allan_campaign,
    run_dc_campaign,
)

CFG = ComparatorConfig(noise=NoiseModel(white_asd=300e-12))


@pytest.fixture(scope="module")
def ac_report():
    return run_ac_campaign(CFG, [30.0, 67.0, 150.0], [0.5, 1.0], repeats=5, seed=1)


def test_round_trip(tmp_path, ac_report):
    path = write_report(ac_report, tmp_path / "r.json")
    back = read_report(path)
    assert back.to_dict() == ac_report.to_dict()
    assert back.to_json() == ac_report.to_json()


def test_quantity_helpers():
    assert quantity(np.float64(2.5), "T") == {"value": 2.5, "unit": "T"}
    assert sequence(np.arange(3), "s") == {"values": [0, 1, 2], "unit": "s"}


def test_io_errors_carry_path(tmp_path):
    target = tmp_path / "file"
    target.write_text("x")
    with pytest.raises(OSError, match="file"):
        write_report(CampaignReport("ac", {}, {}), target / "r.json")
    with pytest.raises(OSError, match="missing.json"):
        read_report(tmp_path / "missing.json")


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.asarray(rows[1:], dtype=float)


def test_ac_plotdata(tmp_path, ac_report):
    paths = {p.name for p in emit_plotdata(ac_report, tmp_path)}
    assert paths == {"spectrum.csv", "frequency_sweep.csv", "linearity.csv"}
    for name in ("spectrum", "frequency_sweep", "linearity"):
        header, data = _read(tmp_path / f"{name}.csv")
        assert tuple(header) == PLOT_HEADERS[name]
        assert all("_" in h for h in header)


def test_spectrum_peaks_at_drive(tmp_path, calibrated):
    cfg, _ = calibrated
    rep = run_ac_campaign(cfg, [67.0], [1.0], repeats=2, seed=0)
    emit_plotdata(rep, tmp_path)
    _, data = _read(tmp_path / "spectrum.csv")
    assert data[np.argmax(data[:, 1]), 0] == 67.0


def test_allan_header_exact(tmp_path):
    rep = run_allan_campaign(CFG, ACDrive(67.0, 1.0), 300.0, time_scale=20)
    emit_plotdata(rep, tmp_path)
    header, data = _read(tmp_path / "allan.csv")
    assert header == ["tau_s", "sigma_T", "sigma_A", "ci"]
    assert np.all(data[:, 1] > 0)


def test_dc_plotdata_and_figures(tmp_path):
    rep = run_dc_campaign(CFG, 1.0, SquareWaveProtocol(1.0, 0.5, 20), time_scale=10)
    emit_plotdata(rep, tmp_path)
    header, data = _read(tmp_path / "dc_cycles.csv")
    assert tuple(header) == PLOT_HEADERS["dc_cycles"]
    assert data.shape == (20, 3)
    figs = render_figures(rep, tmp_path)
    assert [p.name for p in figs] == ["dc_cycles.png"]
    assert figs[0].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_ac_figures(tmp_path, ac_report):
    names = sorted(p.name for p in render_figures(ac_report, tmp_path))
    assert names == ["frequency_sweep.png", "linearity.png", "spectrum.png"]


def test_json_is_plain(ac_report):
    data = json.loads(ac_report.to_json())
    assert data["kind"] == "ac"
    assert "created" not in json.loads(ac_report.to_json(exclude_timestamps=True))["provenance"]
