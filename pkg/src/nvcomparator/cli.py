"""Command-line front end: ``nvcomp <command> ...``.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 data error,
5 runtime error (lock loss, fit non-convergence, I/O failure).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, default_config_path, load_settings
from .dsp import (
    SquareWaveProtocol,
    allan_deviation,
    amplitude_spectrum,
    flux_to_current,
    log_spaced_taus,
    mean_and_se,
    square_wave_extract,
    window_amplitudes,
)
from .fitting import ConvergenceError, fit_frequency_response, fit_line
from .io import DataError, load_timeseries, write_timeseries
from .report import CampaignReport, emit_plotdata, quantity, read_report, sequence, timestamp, write_report
from .series import ValidationError
from .simulation import (
    LockLossError,
    _allan_record,
    run_ac_campaign,
    run_allan_campaign,
    run_dc_campaign,
    simulate_measurement,
    system_coefficient,
)

log = logging.getLogger("nvcomparator")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4, 5
OUTPUT_ENV = "NVCOMP_OUTPUT_DIR"
EXPERIMENTS = ("ac", "dc", "allan-ac", "allan-dc", "series")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _output_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or "nvcomp-out"
    return Path(out)


def _settings(args):
    path = args.config or default_config_path()
    cfg, settings = load_settings(path)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, settings


def _finish(report: CampaignReport, out: Path, name: str = "report.json") -> None:
    path = write_report(report, out / name)
    written = emit_plotdata(report, out)
    print(f"wrote {path}")
    for p in written:
        print(f"wrote {p}")


def cmd_simulate(args) -> int:
    cfg, s = _settings(args)
    out = _output_dir(args)
    exp = args.experiment
    if exp == "ac":
        rep = run_ac_campaign(cfg, [s.ac.frequency], [s.ac.amplitude], window=s.window,
                              repeats=s.repeats, time_scale=s.time_scale)
    elif exp == "dc":
        rep = run_dc_campaign(cfg, s.dc_current, s.dc_protocol, time_scale=s.time_scale)
    elif exp == "allan-ac":
        rep = run_allan_campaign(cfg, s.allan_ac, s.allan_ac_duration, window=s.window,
                                 time_scale=s.allan_ac_time_scale)
    elif exp == "allan-dc":
        rep = run_allan_campaign(cfg, s.allan_dc, s.allan_dc_duration,
                                 time_scale=s.allan_dc_time_scale)
    else:
        series = simulate_measurement(cfg, s.ac, args.duration)
        path = write_timeseries(series, out / "series.csv")
        print(f"wrote {path}")
        return EXIT_OK
    _finish(rep, out)
    _summarize(rep)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, s = _settings(args)
    freqs = args.freqs or list(s.frequencies)
    amps = args.amps or list(s.amplitudes)
    rep = run_ac_campaign(cfg, freqs, amps, window=s.window,
                          repeats=args.repeats or s.repeats, time_scale=s.time_scale)
    _finish(rep, _output_dir(args))
    _summarize(rep)
    return EXIT_OK


def _coefficient(args, f: float) -> float:
    if args.coefficient is not None:
        if not args.coefficient > 0:
            raise DataError("--coefficient must be > 0")
        return args.coefficient
    cfg, _ = _settings(args)
    return system_coefficient(cfg, f)


def _provenance(args) -> dict:
    return {"input": str(args.input), "software": f"nvcomparator {__version__}",
            "created": timestamp()}


def cmd_analyze(args) -> int:
    series = load_timeseries(args.input)
    fs = series.sample_rate
    if args.protocol == "ac":
        if args.f0 is None:
            raise DataError("--f0 is required for the ac protocol")
        coeff = _coefficient(args, args.f0)
        wn = int(round(args.window * fs))
        flux = window_amplitudes(series.samples, fs, args.f0, wn)
        current = flux_to_current(flux, coeff)
        mean, se = mean_and_se(current)
        freqs, amps = amplitude_spectrum(series.slice(0, min(wn, len(series))),
                                         max_frequency=args.max_frequency)
        results = {
            "f0": quantity(args.f0, "Hz"),
            "window": quantity(args.window, "s"),
            "windows": int(current.size),
            "coefficient": quantity(coeff, "T/A"),
            "flux_amplitude": quantity(float(flux.mean()), "T"),
            "current_difference": quantity(mean, "A"),
            "current_difference_se": quantity(se, "A"),
            "window_current_differences": sequence(current, "A"),
            "spectrum": {"frequency": sequence(freqs, "Hz"), "flux": sequence(amps, "T"),
                         "current": sequence(amps / coeff, "A")},
        }
        if args.amplitude:
            results["ratio_error"] = quantity(mean / args.amplitude, "A/A")
            results["ratio_error_se"] = quantity(se / args.amplitude, "A/A")
    else:
        coeff = _coefficient(args, 0.0)
        half = int(round(args.half_period * fs))
        cycles = len(series) // (2 * half) if half else 0
        proto = SquareWaveProtocol(args.half_period, args.exclusion, max(cycles, 1))
        res = square_wave_extract(series, proto)
        delta = flux_to_current(res.step, coeff)
        delta_se = (flux_to_current(res.standard_error, coeff)
                    if math.isfinite(res.standard_error) else float("nan"))
        results = {
            "protocol": {"half_period": quantity(args.half_period, "s"),
                         "transient_exclusion": quantity(args.exclusion, "s"),
                         "cycles": proto.cycles},
            "coefficient": quantity(coeff, "T/A"),
            "step": quantity(res.step, "T"),
            "step_se": quantity(res.standard_error, "T"),
            "current_difference": quantity(delta, "A"),
            "current_difference_se": quantity(delta_se, "A"),
            "cycle_period": quantity(proto.period, "s"),
            "per_cycle_step": sequence(res.per_cycle, "T"),
        }
        if args.amplitude:
            results["ratio_error"] = quantity(delta / args.amplitude, "A/A")
            results["ratio_error_se"] = quantity(delta_se / args.amplitude, "A/A")
    rep = CampaignReport(f"analysis-{args.protocol}", {"input_sample_rate": quantity(fs, "Hz")},
                         results, _provenance(args))
    _finish(rep, _output_dir(args), "analysis.json")
    _summarize(rep)
    return EXIT_OK


def cmd_allan(args) -> int:
    series = load_timeseries(args.input)
    coeff = _coefficient(args, 0.0)
    taus = args.taus if args.taus is not None else log_spaced_taus(series, per_decade=10)
    curve = allan_deviation(series, taus)
    if len(curve) == 0:
        raise DataError("no requested averaging time fits in the record")
    if curve.omitted:
        log.warning("omitted averaging times longer than a third of the record: %s",
                    ", ".join(f"{t:g}" for t in curve.omitted))
    current_curve = curve.scaled(1.0 / coeff, "A")
    tau_min, sig_min = curve.minimum()
    results = {
        "coefficient": quantity(coeff, "T/A"),
        "allan": _allan_record(current_curve, coeff, "A"),
        "omitted_taus": sequence(curve.omitted, "s"),
        "minimum": {"tau": quantity(tau_min, "s"), "sigma_T": quantity(sig_min, "T"),
                    "sigma_A": quantity(sig_min / coeff, "A")},
    }
    rep = CampaignReport("allan", {"input_sample_rate": quantity(series.sample_rate, "Hz")},
                         results, _provenance(args))
    _finish(rep, _output_dir(args), "allan.json")
    _summarize(rep)
    return EXIT_OK


def _read_table(path: Path) -> np.ndarray:
    rows = []
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if lineno == 1:
                        continue
                    raise DataError(f"{path}: row {lineno}: non-numeric value {row!r}") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise DataError(f"{path}: expected 2 or 3 columns on every row")
    return np.asarray(rows)


def cmd_fit(args) -> int:
    table = _read_table(Path(args.input))
    x, y = table[:, 0], table[:, 1]
    sigma = table[:, 2] if table.shape[1] == 3 else None
    if args.model == "line":
        fit = fit_line(x, y, sigma)
        units = {"slope": "y/x", "intercept": "y"}
    else:
        fit = fit_frequency_response(x, y, "ratio-freq", amplitude=args.amplitude)
        units = fit.units
    results = {
        "model": fit.model,
        "parameters": {k: quantity(v, units.get(k, "")) for k, v in fit.parameters.items()},
        "stderr": {k: quantity(math.sqrt(v) if v >= 0 else float("nan"), units.get(k, ""))
                   for k, v in fit.covariance_diag.items()},
        "residual_norm": fit.residual_norm,
        "iterations": fit.iterations,
    }
    rep = CampaignReport("fit", {"model": args.model, "amplitude": quantity(args.amplitude, "A")},
                         results, _provenance(args))
    path = write_report(rep, _output_dir(args) / "fit.json")
    print(f"wrote {path}")
    for k, v in fit.parameters.items():
        se = math.sqrt(fit.covariance_diag[k]) if fit.covariance_diag[k] >= 0 else float("nan")
        print(f"{k} = {v:.6g} +/- {se:.2g} {units.get(k, '')}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .plotting import render_figures

    rep = read_report(args.input)
    out = _output_dir(args)
    for p in emit_plotdata(rep, out):
        print(f"wrote {p}")
    for p in render_figures(rep, out):
        print(f"wrote {p}")
    return EXIT_OK


def _num(q, scale=1.0) -> float:
    v = q["value"]
    return math.nan if v is None else v * scale


def _summarize(rep: CampaignReport) -> None:
    r = rep.results
    if "minimum" in r:
        m = r["minimum"]
        print(f"Allan minimum {_num(m['sigma_T'], 1e12):.3g} pT "
              f"({_num(m['sigma_A'], 1e9):.3g} nA) at tau = {_num(m['tau']):.4g} s")
    if "cells" in r:
        for c in r["cells"]:
            f, a = c["frequency"]["value"], c["amplitude"]["value"]
            if c.get("error"):
                print(f"f = {f:g} Hz, I = {a:g} A: {c['error']}")
            else:
                print(f"f = {f:g} Hz, I = {a:g} A: ratio error "
                      f"{_num(c['ratio_error'], 1e6):.4g} +/- "
                      f"{_num(c['ratio_error_se'], 1e6):.2g} uA/A")
    elif "current_difference" in r:
        print(f"current difference {_num(r['current_difference'], 1e9):.4g} +/- "
              f"{_num(r['current_difference_se'], 1e9):.2g} nA")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nvcomp", description="NV-diamond current comparator toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument("--out", type=Path, help=f"output directory (default ${OUTPUT_ENV} or ./nvcomp-out)")
        if config:
            sp.add_argument("--config", type=Path, help="TOML config (default: shipped calibrated model)")
            sp.add_argument("--seed", type=int, help="override the config seed")

    sp = sub.add_parser("simulate", help="run one experiment from a config")
    common(sp)
    sp.add_argument("--experiment", choices=EXPERIMENTS, default="ac")
    sp.add_argument("--duration", type=float, default=1.0,
                    help="record length in s for --experiment series")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="AC frequency/amplitude grid")
    common(sp)
    sp.add_argument("--freqs", type=_floats)
    sp.add_argument("--amps", type=_floats)
    sp.add_argument("--repeats", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="extract a current difference from a recorded field CSV")
    common(sp)
    sp.add_argument("--input", type=Path, required=True)
    sp.add_argument("--protocol", choices=("ac", "dc"), required=True)
    sp.add_argument("--f0", type=float, help="AC drive frequency (Hz)")
    sp.add_argument("--window", type=float, default=1.0, help="AC window length (s)")
    sp.add_argument("--max-frequency", type=float, default=500.0)
    sp.add_argument("--half-period", type=float, default=1.0, help="DC square-wave half period (s)")
    sp.add_argument("--exclusion", type=float, default=0.5, help="DC transient exclusion (s)")
    sp.add_argument("--coefficient", type=float, help="flux per current difference (T/A)")
    sp.add_argument("--amplitude", type=float, help="drive current (A) for a ratio error")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("allan", help="Allan deviation of a recorded field CSV")
    common(sp)
    sp.add_argument("--input", type=Path, required=True)
    sp.add_argument("--taus", type=_floats)
    sp.add_argument("--coefficient", type=float, help="flux per current difference (T/A)")
    sp.set_defaults(func=cmd_allan)

    sp = sub.add_parser("fit", help="fit a line or ratio-error model to a CSV table")
    common(sp, config=False)
    sp.add_argument("--input", type=Path, required=True)
    sp.add_argument("--model", choices=("ratio-freq", "line"), required=True)
    sp.add_argument("--amplitude", type=float, default=1.0, help="drive amplitude (A) for ratio-freq")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("report", help="plot data and figures from a report JSON")
    common(sp, config=False)
    sp.add_argument("--input", type=Path, required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (LockLossError, ConvergenceError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
