"""Parametric magnetic noise: synthesis and spectral estimation.

All densities are one-sided. The amplitude spectral density of a
:class:`NoiseModel` is::

    S(f) = w^2 (1 + f_k / f) + r^2 / f^2        (plus discrete spurs)

with ``w`` the white level, ``f_k`` the flicker knee and ``r`` the
random-walk coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .series import TimeSeries, ValidationError

__all__ = ["NoiseModel", "synthesize_noise", "psd_estimate", "make_rng"]


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class NoiseModel:
    white_asd: float = 0.0
    flicker_knee: float = 0.0
    random_walk_asd: float = 0.0
    line_spurs: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(
            self, "line_spurs", tuple((float(f), float(a)) for f, a in self.line_spurs)
        )
        for name in ("white_asd", "flicker_knee", "random_walk_asd"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        for f, a in self.line_spurs:
            if f <= 0:
                raise ValidationError("spur frequencies must be > 0")
            if a < 0:
                raise ValidationError("spur amplitudes must be >= 0")

    @property
    def is_zero(self) -> bool:
        return (
            self.white_asd == 0
            and self.random_walk_asd == 0
            and all(a == 0 for _, a in self.line_spurs)
        )

    def psd(self, f):
        """Continuous part of the one-sided PSD (T^2/Hz)."""
        f = np.asarray(f, dtype=float)
        w2 = self.white_asd**2
        with np.errstate(divide="ignore"):
            return w2 * (1 + self.flicker_knee / f) + self.random_walk_asd**2 / f**2

    def asd(self, f):
        return np.sqrt(self.psd(f))

    def compressed(self, factor: float) -> "NoiseModel":
        """Model for a record whose time axis is shrunk by ``factor``.

        If x(t) has PSD S(f), x(factor t) has PSD S(f/factor)/factor. Allan
        deviations of the compressed record at tau/factor equal those of the
        original at tau.
        """
        if factor <= 0:
            raise ValidationError("compression factor must be > 0")
        root = math.sqrt(factor)
        return NoiseModel(
            white_asd=self.white_asd / root,
            flicker_knee=self.flicker_knee * factor,
            random_walk_asd=self.random_walk_asd * root,
            line_spurs=tuple((f * factor, a) for f, a in self.line_spurs),
        )


def _shaped(psd_values: np.ndarray, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian series with the given one-sided PSD on the rfft grid (DC bin zeroed)."""
    nbins = n // 2 + 1
    scale = np.sqrt(psd_values * n * fs / 4)
    spec = scale * (rng.standard_normal(nbins) + 1j * rng.standard_normal(nbins))
    spec[0] = 0.0
    if n % 2 == 0:
        spec[-1] = np.sqrt(psd_values[-1] * n * fs / 2) * rng.standard_normal()
    return np.fft.irfft(spec, n)


def synthesize_noise(noise: NoiseModel, sample_rate: float, duration: float, seed=None) -> TimeSeries:
    """Draw one realization of ``noise``.

    White noise is drawn directly in the time domain, flicker by spectral
    shaping of Gaussian bins, random walk as a cumulative sum of Gaussian
    increments, and spurs as sinusoids with uniformly random phase. Spurs at
    or above Nyquist are dropped, as an anti-alias filter would.
    """
    n = int(round(duration * sample_rate))
    if n < 2:
        raise ValidationError("duration * sample_rate must be >= 2")
    rng = make_rng(seed)
    fs = float(sample_rate)
    x = np.zeros(n)

    if noise.white_asd > 0:
        x += noise.white_asd * math.sqrt(fs / 2) * rng.standard_normal(n)

    if noise.white_asd > 0 and noise.flicker_knee > 0:
        freqs = np.fft.rfftfreq(n, 1 / fs)
        freqs[0] = np.inf
        x += _shaped(noise.white_asd**2 * noise.flicker_knee / freqs, n, fs, rng)

    if noise.random_walk_asd > 0:
        # one-sided S = q / (2 pi^2 f^2) for a Wiener process of diffusion q
        q = 2 * math.pi**2 * noise.random_walk_asd**2
        walk = np.cumsum(rng.standard_normal(n)) * math.sqrt(q / fs)
        x += walk - walk.mean()

    if noise.line_spurs:
        t = np.arange(n) / fs
        for f, a in noise.line_spurs:
            if f >= fs / 2:
                continue
            x += a * np.sin(2 * math.pi * f * t + rng.uniform(0, 2 * math.pi))

    return TimeSeries(fs, x)


def psd_estimate(series: TimeSeries, segment_length: int) -> tuple[np.ndarray, np.ndarray]:
    """Welch amplitude spectral density (Hann taper, 50 % overlap).

    Returns ``(freqs, asd)`` with ``asd`` in units/sqrt(Hz), one-sided.
    """
    segment_length = int(segment_length)
    if segment_length < 2:
        raise ValidationError("segment_length must be >= 2")
    if len(series) < 2 * segment_length:
        raise ValidationError(
            f"series of {len(series)} samples is too short for segment_length {segment_length}"
        )
    freqs, pxx = signal.welch(
        series.samples,
        fs=series.sample_rate,
        window="hann",
        nperseg=segment_length,
        noverlap=segment_length // 2,
        detrend="constant",
        scaling="density",
    )
    return freqs, np.sqrt(pxx)
