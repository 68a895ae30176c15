"""PNG figures rendered from the same tables written as plot-data CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import CampaignReport, plot_tables  # noqa: E402

__all__ = ["render_figures"]


def _spectrum(ax, rows):
    f, _, i = np.asarray(rows, dtype=float).T
    ax.plot(f, i * 1e6, lw=0.8)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("current difference (uA)")
    ax.set_title("Amplitude spectrum")


def _grouped(ax, rows, group_col, x_col, fit_label, x_label):
    data = np.asarray(rows, dtype=float)
    for g in np.unique(data[:, group_col]):
        sel = data[data[:, group_col] == g]
        sel = sel[np.argsort(sel[:, x_col])]
        x = sel[:, x_col]
        line = ax.errorbar(x, sel[:, 2] * 1e6, yerr=sel[:, 3] * 1e6, fmt="o", ms=3,
                           label=f"{g:g}")[0]
        if np.all(np.isfinite(sel[:, 4])):
            ax.plot(x, sel[:, 4] * 1e6, "-", color=line.get_color(), lw=0.8)
    ax.set_xlabel(x_label)
    ax.set_ylabel("current difference (uA)")
    ax.legend(title=fit_label, fontsize="small")


def _allan(ax, rows):
    tau, sig_t, _, ci = np.asarray(rows, dtype=float).T
    ax.errorbar(tau, sig_t * 1e12, yerr=ci * 1e12, fmt="o-", ms=3, lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("averaging time (s)")
    ax.set_ylabel("Allan deviation (pT)")
    ax.set_title("Allan deviation")


def _dc_cycles(ax, rows):
    t, step, _ = np.asarray(rows, dtype=float).T
    ax.plot(t, step * 1e12, ".", ms=3)
    ax.axhline(np.mean(step) * 1e12, color="k", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("on-off step (pT)")
    ax.set_title("Per-cycle DC step")


def render_figures(report: CampaignReport, out_dir) -> list[Path]:
    """One PNG per figure table; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in plot_tables(report).items():
        if not rows:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        if name == "spectrum":
            _spectrum(ax, rows)
        elif name == "frequency_sweep":
            _grouped(ax, rows, 1, 0, "amplitude (A)", "frequency (Hz)")
            ax.set_title("Frequency response")
        elif name == "linearity":
            _grouped(ax, rows, 0, 1, "frequency (Hz)", "amplitude (A)")
            ax.set_title("Linearity")
        elif name == "allan":
            _allan(ax, rows)
        elif name == "dc_cycles":
            _dc_cycles(ax, rows)
        fig.tight_layout()
        path = out_dir / f"{name}.png"
        try:
            fig.savefig(path, dpi=120)
        except OSError as exc:
            raise OSError(f"cannot write figure {path}: {exc}") from exc
        finally:
            plt.close(fig)
        paths.append(path)
    return paths
