"""Campaign reports: JSON persistence and per-figure CSV plot data.

Scalars are stored as ``{"value": v, "unit": u}`` and arrays as
``{"values": [...], "unit": u}`` so no number travels without its unit.
Non-finite numbers (undefined standard errors, for instance) are written as
JSON ``null`` so reports stay strict JSON and round-trip exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CampaignReport",
    "quantity",
    "sequence",
    "value_of",
    "values_of",
    "write_report",
    "read_report",
    "emit_plotdata",
    "PLOT_HEADERS",
]


def _plain(x):
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    return x


def quantity(value, unit: str) -> dict:
    return {"value": _plain(value), "unit": unit}


def sequence(values, unit: str) -> dict:
    return {"values": _plain(np.asarray(values).tolist()), "unit": unit}


def value_of(q) -> float:
    return q["value"]


def values_of(q) -> np.ndarray:
    return np.asarray(q["values"], dtype=float)


def timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class CampaignReport:
    kind: str
    config: dict
    results: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain({
            "kind": self.kind,
            "config": self.config,
            "results": self.results,
            "provenance": self.provenance,
        })

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignReport":
        return cls(data["kind"], data["config"], data["results"], data.get("provenance", {}))

    def to_json(self, exclude_timestamps: bool = False) -> str:
        data = self.to_dict()
        if exclude_timestamps:
            data["provenance"].pop("created", None)
        return json.dumps(data, indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "CampaignReport":
        return cls.from_dict(json.loads(text))


def write_report(report: CampaignReport, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.to_json() + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> CampaignReport:
    path = Path(path)
    try:
        return CampaignReport.from_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read report {path}: {exc}") from exc


PLOT_HEADERS = {
    "spectrum": ("frequency_Hz", "flux_T", "current_A"),
    "frequency_sweep": ("frequency_Hz", "amplitude_A", "current_difference_A", "se_A", "model_A"),
    "linearity": ("frequency_Hz", "amplitude_A", "current_difference_A", "se_A", "fit_A"),
    "allan": ("tau_s", "sigma_T", "sigma_A", "ci"),
    "dc_cycles": ("time_s", "step_T", "current_difference_A"),
}


def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(math.nan if v is None else float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write plot data to {path}: {exc}") from exc
    return path


def _fit_param(entry, name):
    fit = entry.get("fit")
    return None if fit is None else fit["parameters"][name]["value"]


def plot_tables(report: CampaignReport) -> dict:
    """Rows for each figure analog the report can feed, keyed by table name."""
    r = report.results
    tables = {}
    if "spectrum" in r:
        s = r["spectrum"]
        tables["spectrum"] = list(zip(values_of(s["frequency"]), values_of(s["flux"]),
                                      values_of(s["current"])))
    if report.kind == "ac":
        cells = [c for c in r["cells"] if c.get("error") is None]
        by_amp = {e["amplitude"]["value"]: e for e in r.get("frequency_response", [])}
        by_freq = {e["frequency"]["value"]: e for e in r.get("linearity", [])}
        if r.get("frequency_response"):
            rows = []
            for c in cells:
                f, a = c["frequency"]["value"], c["amplitude"]["value"]
                e = by_amp.get(a, {})
                eh, ee = _fit_param(e, "eps_h"), _fit_param(e, "eps_e")
                model = a * (eh + ee * f) if eh is not None else math.nan
                rows.append((f, a, c["current_difference"]["value"],
                             c["current_difference_se"]["value"], model))
            tables["frequency_sweep"] = sorted(rows, key=lambda t: (t[1], t[0]))
        if r.get("linearity"):
            rows = []
            for c in cells:
                f, a = c["frequency"]["value"], c["amplitude"]["value"]
                e = by_freq.get(f, {})
                k, b = _fit_param(e, "slope"), _fit_param(e, "intercept")
                fit = k * a + b if k is not None else math.nan
                rows.append((f, a, c["current_difference"]["value"],
                             c["current_difference_se"]["value"], fit))
            tables["linearity"] = sorted(rows, key=lambda t: (t[0], t[1]))
    if "allan" in r:
        al = r["allan"]
        tables["allan"] = list(zip(values_of(al["tau"]), values_of(al["sigma_T"]),
                                   values_of(al["sigma_A"]), values_of(al["ci"])))
    if report.kind == "dc":
        steps = values_of(r["per_cycle_step"])
        period = r["cycle_period"]["value"]
        coeff = r["coefficient"]["value"]
        tables["dc_cycles"] = [((i + 0.5) * period, s, s / coeff) for i, s in enumerate(steps)]
    return tables


def emit_plotdata(report: CampaignReport, out_dir) -> list[Path]:
    """Write one CSV per figure analog; header names every column with its unit."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in plot_tables(report).items():
        paths.append(_write_csv(out_dir / f"{name}.csv", PLOT_HEADERS[name], rows))
    return paths
