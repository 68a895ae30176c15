"""Measurement extraction and statistics for the AC and DC ratio protocols."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .series import TimeSeries, ValidationError

__all__ = [
    "AllanCurve",
    "SquareWaveProtocol",
    "SquareWaveResult",
    "DecadeSlope",
    "coherent_length",
    "dft_bin",
    "dft_bin_amplitude",
    "amplitude_spectrum",
    "square_wave_extract",
    "allan_deviation",
    "log_spaced_taus",
    "required_integration_time",
    "noise_slope_id",
    "flux_to_current",
    "mean_and_se",
]


def coherent_length(n: int, sample_rate: float, f0: float) -> int:
    """Longest prefix length holding a whole number of ``f0`` cycles.

    Exact when ``f0 / sample_rate`` is a ratio of small integers; otherwise
    the nearest sample count to a whole number of cycles.
    """
    if not 0 < f0 < sample_rate / 2:
        raise ValidationError(f"f0={f0} Hz must lie in (0, Nyquist={sample_rate / 2} Hz)")
    cycles = math.floor(n * f0 / sample_rate + 1e-9)
    if cycles < 1:
        raise ValidationError("window is shorter than one excitation cycle")
    ratio = Fraction(f0 / sample_rate).limit_denominator(n)
    if ratio.denominator <= n and abs(float(ratio) - f0 / sample_rate) < 1e-15:
        q = ratio.denominator
        return (n // q) * q
    return int(round(cycles * sample_rate / f0))


def dft_bin(series: TimeSeries, f0: float) -> complex:
    """Complex single-bin projection ``(2/N) sum x_n exp(-i 2 pi f0 n / fs)``.

    The window is trimmed to a coherent length first.
    """
    series.require_nonempty()
    fs = series.sample_rate
    n = coherent_length(len(series), fs, f0)
    x = series.samples[:n]
    phase = 2 * np.pi * f0 / fs * np.arange(n)
    return 2.0 / n * complex(np.dot(x, np.cos(phase)), -np.dot(x, np.sin(phase)))


def dft_bin_amplitude(series: TimeSeries, f0: float) -> float:
    """Amplitude of the ``f0`` component under coherent, rectangular windowing."""
    return abs(dft_bin(series, f0))


def window_amplitudes(samples: np.ndarray, sample_rate: float, f0: float,
                      window_samples: int) -> np.ndarray:
    """Single-bin amplitudes of consecutive, non-overlapping windows."""
    n = coherent_length(window_samples, sample_rate, f0)
    count = samples.size // window_samples
    if count < 1:
        raise ValidationError("record is shorter than one window")
    block = samples[: count * window_samples].reshape(count, window_samples)[:, :n]
    phase = 2 * np.pi * f0 / sample_rate * np.arange(n)
    re = block @ np.cos(phase)
    im = block @ np.sin(phase)
    return 2.0 / n * np.hypot(re, im)


def amplitude_spectrum(series: TimeSeries, max_frequency: float | None = None):
    """Rectangular-window amplitude spectrum of the mean-removed record."""
    series.require_nonempty()
    x = series.samples - series.samples.mean()
    n = x.size
    freqs = np.fft.rfftfreq(n, series.dt)
    amp = 2.0 / n * np.abs(np.fft.rfft(x))
    amp[0] = 0.0
    if max_frequency is not None:
        keep = freqs <= max_frequency
        freqs, amp = freqs[keep], amp[keep]
    return freqs, amp


@dataclass(frozen=True)
class SquareWaveProtocol:
    half_period: float = 1.0
    transient_exclusion: float = 0.5
    cycles: int = 1

    def __post_init__(self):
        if not self.half_period > 0:
            raise ValidationError("half_period must be > 0")
        if not 0 <= self.transient_exclusion < self.half_period:
            raise ValidationError("transient_exclusion must lie in [0, half_period)")
        if self.cycles < 1:
            raise ValidationError("cycles must be >= 1")

    @property
    def period(self) -> float:
        return 2 * self.half_period

    @property
    def duration(self) -> float:
        return self.cycles * self.period


@dataclass
class SquareWaveResult:
    step: float
    standard_error: float
    off_mean: float
    per_cycle: np.ndarray = field(repr=False)
    cycle_period: float = 2.0


def square_wave_extract(series: TimeSeries, proto: SquareWaveProtocol) -> SquareWaveResult:
    """On-minus-off flux step of a synchronous square-wave record.

    Each cycle starts with the on half. The first ``transient_exclusion``
    seconds of every half are dropped before averaging.
    """
    fs = series.sample_rate
    half = int(round(proto.half_period * fs))
    skip = int(round(proto.transient_exclusion * fs))
    if half < 1 or skip >= half:
        raise ValidationError("protocol leaves no samples per half cycle at this sample rate")
    available = len(series) // (2 * half)
    if available < 1:
        raise ValidationError("series holds fewer than one complete square-wave cycle")
    if available < proto.cycles:
        raise ValidationError(
            f"series holds {available} complete cycles, protocol needs {proto.cycles}"
        )
    block = series.samples[: proto.cycles * 2 * half].reshape(proto.cycles, 2, half)
    kept = block[:, :, skip:].mean(axis=2)
    diffs = kept[:, 0] - kept[:, 1]
    step, se = mean_and_se(diffs)
    return SquareWaveResult(step, se, float(kept[:, 1].mean()), diffs, proto.period)


def mean_and_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValidationError("no values")
    if v.size == 1:
        return float(v[0]), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class AllanCurve:
    taus: np.ndarray
    sigmas: np.ndarray
    counts: np.ndarray
    units: str = "T"
    omitted: list = field(default_factory=list)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        if not (self.taus.size == self.sigmas.size == self.counts.size):
            raise ValidationError("taus, sigmas and counts must have equal length")
        if np.any(np.diff(self.taus) <= 0):
            raise ValidationError("taus must be strictly increasing")
        if np.any(self.sigmas < 0):
            raise ValidationError("sigmas must be >= 0")

    def __len__(self):
        return self.taus.size

    @property
    def ci(self) -> np.ndarray:
        """One-sigma error bars, ``sigma / sqrt(pairs)``."""
        return self.sigmas / np.sqrt(np.maximum(self.counts, 1))

    def minimum(self) -> tuple[float, float]:
        i = int(np.argmin(self.sigmas))
        return float(self.taus[i]), float(self.sigmas[i])

    def scaled(self, factor: float, units: str) -> "AllanCurve":
        return AllanCurve(self.taus, self.sigmas * abs(factor), self.counts, units, list(self.omitted))


def log_spaced_taus(series: TimeSeries, per_decade: int = 8, max_fraction: float = 1 / 3):
    """Log-spaced averaging times from one sample up to ``max_fraction`` of the record."""
    lo = series.dt
    hi = series.duration * max_fraction
    if hi < lo:
        raise ValidationError("series too short for any averaging time")
    decades = math.log10(hi / lo)
    count = max(1, int(math.floor(decades * per_decade)) + 1)
    m = np.unique(np.round(np.logspace(0, decades, count)).astype(int))
    return m / series.sample_rate


def allan_deviation(series: TimeSeries, taus: Sequence[float]) -> AllanCurve:
    """Overlapping Allan deviation of a sampled (frequency-type) record.

    Averaging times are snapped to whole samples; duplicates after snapping
    are merged. Times longer than a third of the record are omitted and
    listed in ``omitted``.
    """
    series.require_nonempty()
    y = series.samples - series.samples.mean()
    n = y.size
    fs = series.sample_rate
    csum = np.concatenate(([0.0], np.cumsum(y)))
    out_t, out_s, out_c, omitted = [], [], [], []
    seen = set()
    for tau in sorted(float(t) for t in taus):
        m = int(round(tau * fs))
        if m < 1 or 3 * m > n:
            omitted.append(tau)
            continue
        if m in seen:
            continue
        seen.add(m)
        means = (csum[m:] - csum[:-m]) / m
        d = means[m:] - means[:-m]
        out_t.append(m / fs)
        out_s.append(math.sqrt(0.5 * float(np.mean(d * d))))
        out_c.append(d.size)
    return AllanCurve(np.array(out_t), np.array(out_s), np.array(out_c, dtype=int),
                      series.units, omitted)


def required_integration_time(floor_asd: float, target: float) -> float:
    """Averaging time for ``floor_asd / sqrt(t)`` to reach ``target``."""
    if floor_asd <= 0 or target <= 0:
        raise ValidationError("floor_asd and target must be > 0")
    return (floor_asd / target) ** 2


_LABELS = ((-0.5, "white"), (0.0, "flicker"), (0.5, "random-walk"))


@dataclass(frozen=True)
class DecadeSlope:
    tau_start: float
    tau_stop: float
    slope: float
    label: str
    points: int


def _label(slope: float) -> str:
    return min(_LABELS, key=lambda item: abs(item[0] - slope))[1]


def noise_slope_id(curve: AllanCurve, min_points: int = 4) -> list[DecadeSlope]:
    """Least-squares log-log slope per decade of averaging time.

    Decades are anchored at the shortest tau. Decades with fewer than
    ``min_points`` points are skipped; at least one must qualify.
    """
    if np.any(curve.sigmas <= 0):
        raise ValidationError("slope identification needs strictly positive deviations")
    if len(curve) < min_points:
        raise ValidationError(f"need at least {min_points} points, got {len(curve)}")
    lt = np.log10(curve.taus)
    ls = np.log10(curve.sigmas)
    out = []
    start = lt[0]
    while start < lt[-1]:
        sel = (lt >= start - 1e-12) & (lt <= start + 1 + 1e-12)
        if sel.sum() >= min_points:
            slope = float(np.polyfit(lt[sel], ls[sel], 1)[0])
            out.append(DecadeSlope(10 ** lt[sel][0], 10 ** lt[sel][-1], slope, _label(slope),
                                   int(sel.sum())))
        start += 1
    if not out:
        raise ValidationError(f"no decade holds {min_points} or more points")
    return out


def flux_to_current(flux, coefficient: float):
    """Equivalent current difference for a flux, given T/A ``coefficient``."""
    if not coefficient > 0:
        raise ValidationError("conversion coefficient must be > 0")
    return np.asarray(flux, dtype=float) / coefficient if np.ndim(flux) else flux / coefficient
