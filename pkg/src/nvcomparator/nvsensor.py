"""NV-ensemble magnetometer: resonances, cw-ODMR, FM error signal and tracking.

Sign convention for the FM error signal: the lock-in reference is chosen so
that the demodulated output has a negative slope through each resonance.
In the linear region ``error ~= slope * (f_hat - f_resonance)``, so
``f_hat += k * error / |slope|`` is a restoring update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel, make_rng, synthesize_noise
from .series import TimeSeries, ValidationError

__all__ = [
    "SensorPhysics",
    "TrackerConfig",
    "zeeman_resonances",
    "field_from_resonances",
    "odmr_spectrum",
    "fm_error_signal",
    "discriminator_slope",
    "lock_pull",
    "unpull_field",
    "shot_noise_limit",
    "track_field",
]

NV_ZERO_FIELD_SPLITTING = 2.87e9
NV_GYROMAGNETIC_RATIO = 28.024e9


@dataclass(frozen=True)
class SensorPhysics:
    zero_field_splitting: float = NV_ZERO_FIELD_SPLITTING
    gyromagnetic_ratio: float = NV_GYROMAGNETIC_RATIO
    contrast: float = 0.01
    linewidth_fwhm: float = 1.0e6
    photon_rate: float = 1.0e15

    def __post_init__(self):
        if not self.gyromagnetic_ratio > 0:
            raise ValidationError("gyromagnetic_ratio must be > 0")
        if not 0 < self.contrast < 1:
            raise ValidationError("contrast must lie in (0, 1)")
        if not self.linewidth_fwhm > 0:
            raise ValidationError("linewidth_fwhm must be > 0")
        if not self.photon_rate > 0:
            raise ValidationError("photon_rate must be > 0")
        if not self.zero_field_splitting > 0:
            raise ValidationError("zero_field_splitting must be > 0")

    @property
    def guard_field(self) -> float:
        """Default near-zero guard: splitting below two linewidths."""
        return self.linewidth_fwhm / self.gyromagnetic_ratio


@dataclass(frozen=True)
class TrackerConfig:
    fm_deviation: float = 1.0e5
    multiplex_period: float = 1.0e-4
    loop_gain: float = 1.0
    loop_bandwidth: float = 300.0
    guard_field: float | None = None

    def __post_init__(self):
        for name in ("fm_deviation", "multiplex_period", "loop_gain", "loop_bandwidth"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if self.guard_field is not None and self.guard_field < 0:
            raise ValidationError("guard_field must be >= 0")

    def check_rate(self, sample_rate: float):
        if not self.loop_bandwidth < sample_rate / 2:
            raise ValidationError("loop_bandwidth must be below the Nyquist frequency")


def zeeman_resonances(phys: SensorPhysics, b_axis):
    """Return ``(f_minus, f_plus) = D -/+ gamma * b``."""
    shift = phys.gyromagnetic_ratio * np.asarray(b_axis, dtype=float)
    f_minus = phys.zero_field_splitting - shift
    f_plus = phys.zero_field_splitting + shift
    if f_minus.ndim == 0:
        return float(f_minus), float(f_plus)
    return f_minus, f_plus


def field_from_resonances(phys: SensorPhysics, f_minus, f_plus):
    return (np.asarray(f_plus) - np.asarray(f_minus)) / (2 * phys.gyromagnetic_ratio)


def _lorentzian(f, center, fwhm):
    u = 2 * (f - center) / fwhm
    return 1 / (1 + u * u)


def odmr_spectrum(phys: SensorPhysics, b_axis, f_mw):
    """Normalized photoluminescence with two unit-peak Lorentzian dips."""
    f_mw = np.asarray(f_mw, dtype=float)
    if np.any(f_mw <= 0):
        raise ValidationError("microwave frequency must be > 0")
    f_minus, f_plus = zeeman_resonances(phys, b_axis)
    f_minus, f_plus = np.asarray(f_minus), np.asarray(f_plus)
    dips = _lorentzian(f_mw, f_minus, phys.linewidth_fwhm) + _lorentzian(
        f_mw, f_plus, phys.linewidth_fwhm
    )
    out = 1 - phys.contrast * dips
    return float(out) if out.ndim == 0 else out


_N_PHASE = 32
_PHASES = np.linspace(0, 2 * np.pi, _N_PHASE, endpoint=False)
_SIN = np.sin(_PHASES)


def fm_error_signal(phys: SensorPhysics, b_axis, f_center, cfg: TrackerConfig):
    """First-harmonic lock-in output for sinusoidal FM about ``f_center``.

    Returns ``-(2/n) sum PL(f_c + delta sin theta) sin theta`` over a uniform
    phase grid, which tends to ``-delta * dPL/df`` for small deviation.
    """
    if cfg.fm_deviation >= phys.linewidth_fwhm:
        raise ValidationError("fm_deviation must be smaller than the linewidth")
    fc = np.asarray(f_center, dtype=float)
    probe = fc[..., None] + cfg.fm_deviation * _SIN
    pl = odmr_spectrum(phys, np.asarray(b_axis, dtype=float)[..., None], probe)
    out = -2.0 / _N_PHASE * (pl * _SIN).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def discriminator_slope(phys: SensorPhysics, cfg: TrackerConfig) -> float:
    """d(error)/d(f_center) at an isolated resonance (negative)."""
    # lines pushed far apart so the partner line does not bias the slope
    b_far = 1e3 * phys.linewidth_fwhm / phys.gyromagnetic_ratio
    _, f_plus = zeeman_resonances(phys, b_far)
    h = 1e-3 * phys.linewidth_fwhm
    hi = fm_error_signal(phys, b_far, f_plus + h, cfg)
    lo = fm_error_signal(phys, b_far, f_plus - h, cfg)
    return (hi - lo) / (2 * h)


def shot_noise_limit(phys: SensorPhysics) -> float:
    """Photon-shot-noise-limited cw-ODMR sensitivity (T/sqrt(Hz))."""
    return (
        4 / (3 * math.sqrt(3))
        * phys.linewidth_fwhm
        / (phys.gyromagnetic_ratio * phys.contrast * math.sqrt(phys.photon_rate))
    )


def lock_pull(phys: SensorPhysics, cfg: TrackerConfig, b_axis, iterations: int = 8):
    """Offset of the upper lock point from ``f_plus`` caused by the partner line.

    By mirror symmetry about D the lower lock point is pulled by the same
    amount in the opposite direction.
    """
    b = np.asarray(b_axis, dtype=float)
    slope = discriminator_slope(phys, cfg)
    _, f_plus = zeeman_resonances(phys, b)
    pull = np.zeros_like(b)
    for _ in range(iterations):
        pull = pull - fm_error_signal(phys, b, f_plus + pull, cfg) / slope
    return pull


def unpull_field(phys: SensorPhysics, cfg: TrackerConfig, raw_field, iterations: int = 6):
    """Invert ``raw = b + pull(b) / gamma`` by fixed-point iteration."""
    raw = np.asarray(raw_field, dtype=float)
    b = raw.copy()
    for _ in range(iterations):
        b = raw - lock_pull(phys, cfg, b) / phys.gyromagnetic_ratio
    return b


def _scalar_error(fc, dev, fm, fp, fwhm, contrast, sines):
    """FM error and mean photoluminescence over one modulation cycle."""
    acc = 0.0
    total = 0.0
    two_over_w = 2.0 / fwhm
    for s in sines:
        f = fc + dev * s
        um = (f - fm) * two_over_w
        up = (f - fp) * two_over_w
        pl = 1.0 - contrast * (1.0 / (1.0 + um * um) + 1.0 / (1.0 + up * up))
        acc += pl * s
        total += pl
    return -2.0 * acc / len(sines), total / len(sines)


def track_field(true_field: TimeSeries, phys: SensorPhysics, cfg: TrackerConfig,
                noise: NoiseModel | None = None, seed=None,
                initial_field: float | None = None) -> TimeSeries:
    """Closed-loop, time-multiplexed tracking of both Zeeman resonances.

    The two microwave frequency estimates are updated alternately, one per
    multiplex slot, by an integrator acting on the normalized FM error. The
    per-slot gain is doubled so each resonance sees the nominal first-order
    ``loop_bandwidth`` on average. Samples are marked invalid when the
    normalized error leaves the linear region, when the mean fluorescence
    shows less than half the contrast (the probe has slipped off the line),
    or when the field estimate falls inside the near-zero guard band.
    """
    true_field.require_nonempty()
    fs = true_field.sample_rate
    cfg.check_rate(fs)
    n = len(true_field)
    measured = true_field.samples
    if noise is not None and not noise.is_zero:
        rng = make_rng(seed)
        measured = measured + synthesize_noise(noise, fs, n / fs, rng).samples[:n]

    gamma = phys.gyromagnetic_ratio
    guard = phys.guard_field if cfg.guard_field is None else cfg.guard_field
    abs_slope = abs(discriminator_slope(phys, cfg))
    # saturation of error/|slope| occurs at ~0.162 linewidth; beyond half of it the
    # discriminator is no longer linear
    linear_limit = 0.5 * 0.1624 * phys.linewidth_fwhm
    gain = cfg.loop_gain * 2 * math.pi * cfg.loop_bandwidth / (fs * 0.5)
    slot = max(1, int(round(cfg.multiplex_period * fs)))

    b0 = float(measured[0]) if initial_field is None else float(initial_field)
    f_hat = [phys.zero_field_splitting - gamma * b0, phys.zero_field_splitting + gamma * b0]
    sines = tuple(float(s) for s in _SIN)
    dev, fwhm, c, d = cfg.fm_deviation, phys.linewidth_fwhm, phys.contrast, phys.zero_field_splitting

    estimate = np.empty(n)
    valid = np.ones(n, dtype=bool)
    for i in range(n):
        b = float(measured[i])
        fm = d - gamma * b
        fp = d + gamma * b
        which = (i // slot) % 2
        err, mean_pl = _scalar_error(f_hat[which], dev, fm, fp, fwhm, c, sines)
        offset = err / abs_slope
        f_hat[which] += gain * offset
        b_hat = (f_hat[1] - f_hat[0]) / (2 * gamma)
        estimate[i] = b_hat
        # far outside the line the error signal fades to zero; the missing dip
        # in the mean fluorescence gives the lock loss away
        off_line = 1.0 - mean_pl < 0.5 * c
        if off_line or abs(offset) > linear_limit or abs(b_hat) < guard:
            valid[i] = False

    ok = np.abs(estimate) >= guard
    estimate[ok] = unpull_field(phys, cfg, estimate[ok])
    return TimeSeries(fs, estimate, true_field.start_time, true_field.units, valid)
