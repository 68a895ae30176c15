"""End-to-end comparator campaigns.

The simulated residual flux is the net ampere-turn imbalance ``N * I(t) *
eps(t)`` pushed through the gap circuit and the core loss model, plus an
auxiliary-winding offset field and sensor noise. The sensor is either ideal
(field plus noise, through the first-order system bandwidth) or the
closed-loop resonance tracker.

``time_scale`` runs a campaign at ``sample_rate / time_scale``. For these
stationary noise models that is the same as compressing the time axis by
``time_scale`` at the nominal rate with noise knees scaled up and white
levels scaled down (see :meth:`NoiseModel.compressed`); Allan statistics at
a given real averaging time are unchanged. Only in-band content below the
reduced Nyquist frequency is represented.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import __version__
from .dsp import (
    SquareWaveProtocol,
    allan_deviation,
    amplitude_spectrum,
    flux_to_current,
    log_spaced_taus,
    mean_and_se,
    noise_slope_id,
    square_wave_extract,
    window_amplitudes,
)
from .fitting import ConvergenceError, FitResult, fit_frequency_response, fit_line
from .magcore import (
    CoreGeometry,
    CoreMaterial,
    WindingConfig,
    conversion_coefficient,
    gap_flux_density,
    ratio_error_model,
    transfer_attenuation,
    transfer_phase,
)
from .noise import NoiseModel, _shaped, synthesize_noise
from .nvsensor import SensorPhysics, TrackerConfig, track_field
from .report import CampaignReport, quantity, sequence, timestamp
from .series import TimeSeries, ValidationError

log = logging.getLogger(__name__)

__all__ = [
    "DriftModel",
    "ComparatorConfig",
    "ACDrive",
    "DCDrive",
    "LockLossError",
    "system_coefficient",
    "simulate_measurement",
    "run_ac_campaign",
    "run_allan_campaign",
    "run_dc_campaign",
]


class LockLossError(RuntimeError):
    """The resonance tracker left its linear capture range."""


@dataclass(frozen=True)
class DriftModel:
    """Slow wander of the ratio error itself, in A/A.

    ``flicker_floor`` is the flat Allan deviation of the flicker part;
    ``random_walk`` is ``c`` in ``sigma(tau) = c * sqrt(tau)`` (per sqrt(s)).
    """

    flicker_floor: float = 0.0
    random_walk: float = 0.0

    def __post_init__(self):
        if self.flicker_floor < 0 or self.random_walk < 0:
            raise ValidationError("drift coefficients must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.flicker_floor == 0 and self.random_walk == 0

    def synthesize(self, n: int, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros(n)
        if self.flicker_floor > 0 and n > 1:
            # flicker Allan floor: sigma^2 = 2 ln2 h for S(f) = h / f
            h = self.flicker_floor**2 / (2 * math.log(2))
            freqs = np.fft.rfftfreq(n, 1 / sample_rate)
            freqs[0] = np.inf
            out += _shaped(h / freqs, n, sample_rate, rng)
        if self.random_walk > 0:
            # Wiener process of diffusion q has Allan variance q tau / 3
            q = 3 * self.random_walk**2
            walk = np.cumsum(rng.standard_normal(n)) * math.sqrt(q / sample_rate)
            out += walk - walk.mean()
        return out


@dataclass(frozen=True)
class ACDrive:
    frequency: float
    amplitude: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValidationError("AC drive frequency must be > 0")
        if not self.amplitude >= 0:
            raise ValidationError("AC drive amplitude must be >= 0")


@dataclass(frozen=True)
class DCDrive:
    current: float
    protocol: SquareWaveProtocol = field(default_factory=SquareWaveProtocol)

    def __post_init__(self):
        if not self.current >= 0:
            raise ValidationError("DC drive current must be >= 0")


SENSOR_MODES = ("ideal", "tracked")


@dataclass(frozen=True)
class ComparatorConfig:
    geometry: CoreGeometry = field(default_factory=CoreGeometry)
    material: CoreMaterial = field(default_factory=CoreMaterial)
    windings: WindingConfig = field(default_factory=WindingConfig)
    injected_ratio_error: tuple = (40e-6, 36e-6 / 67)
    dc_ratio_error: float = 1.5e-7
    noise: NoiseModel = field(default_factory=NoiseModel)
    sensor: SensorPhysics = field(default_factory=SensorPhysics)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    sample_rate: float = 10_000.0
    seed: int = 0
    offset_field: float = 100e-6
    system_bandwidth: float = 300.0
    sensor_mode: str = "ideal"
    ac_drift: DriftModel = field(default_factory=DriftModel)
    dc_drift: DriftModel = field(default_factory=DriftModel)

    def __post_init__(self):
        object.__setattr__(self, "injected_ratio_error", tuple(float(v) for v in self.injected_ratio_error))
        if len(self.injected_ratio_error) != 2:
            raise ValidationError("injected_ratio_error must be (eps_h, eps_e)")
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be > 0")
        if not self.system_bandwidth > 0:
            raise ValidationError("system_bandwidth must be > 0")
        if self.sensor_mode not in SENSOR_MODES:
            raise ValidationError(f"sensor_mode must be one of {SENSOR_MODES}")
        if self.windings.primary_turns < 1:
            raise ValidationError("primary_turns must be >= 1")
        guard = self.guard_field
        if abs(self.offset_field) <= guard:
            raise ValidationError(
                f"offset_field {self.offset_field:g} T lies inside the near-zero guard band "
                f"|b| < {guard:g} T"
            )

    @property
    def guard_field(self) -> float:
        g = self.tracker.guard_field
        return self.sensor.guard_field if g is None else g

    @property
    def turns(self) -> int:
        return self.windings.primary_turns

    def ratio_error(self, f: float) -> float:
        return ratio_error_model(f, *self.injected_ratio_error)

    def coefficient(self, f: float) -> float:
        """Core conversion coefficient K(f) in T/A."""
        return conversion_coefficient(self.geometry, self.material, self.turns, f)

    def to_dict(self) -> dict:
        return asdict(self)


def _sensor_response(cfg: ComparatorConfig, f):
    corner = cfg.tracker.loop_bandwidth if cfg.sensor_mode == "tracked" else cfg.system_bandwidth
    return 1.0 / (1.0 + 1j * np.asarray(f, dtype=float) / corner)


def system_coefficient(cfg: ComparatorConfig, f: float) -> float:
    """Flux reported by the sensor per ampere of current difference (T/A)."""
    return cfg.coefficient(f) * float(abs(_sensor_response(cfg, f)))


def _lowpass(x: np.ndarray, fs: float, response) -> np.ndarray:
    freqs = np.fft.rfftfreq(x.size, 1 / fs)
    return np.fft.irfft(np.fft.rfft(x) * response(freqs), x.size)


def simulate_measurement(cfg: ComparatorConfig, drive, duration: float, seed=None,
                         time_scale: float = 1.0) -> TimeSeries:
    """Sensor output for one drive waveform.

    AC drives are sinusoids starting at zero phase; DC drives are square
    waves starting in the on state. Returns the reported field record at
    ``cfg.sample_rate / time_scale``.
    """
    if time_scale <= 0:
        raise ValidationError("time_scale must be > 0")
    fs = cfg.sample_rate / time_scale
    n = int(round(duration * fs))
    if n < 2:
        raise ValidationError("duration too short for the sample rate")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    noise_rng, drift_rng = rng.spawn(2)
    t = np.arange(n) / fs
    per_amp = gap_flux_density(cfg.geometry, cfg.material, float(cfg.turns))

    ac_part = np.zeros(n)
    slow_part = np.zeros(n)
    if isinstance(drive, ACDrive):
        f = drive.frequency
        if not cfg.sample_rate > 2 * f or not fs > 2 * f:
            raise ValidationError(
                f"sample rate {fs:g} Hz is not above twice the drive frequency {f:g} Hz"
            )
        eps = cfg.ratio_error(f) + cfg.ac_drift.synthesize(n, fs, drift_rng)
        k = per_amp * transfer_attenuation(f, cfg.material)
        phase = float(transfer_phase(f, cfg.material))
        peak = k * drive.amplitude * float(np.max(np.abs(eps)))
        if cfg.sensor_mode == "ideal":
            h = complex(_sensor_response(cfg, f))
            ac_part = abs(h) * k * drive.amplitude * eps * np.sin(2 * np.pi * f * t + phase + np.angle(h))
        else:
            ac_part = k * drive.amplitude * eps * np.sin(2 * np.pi * f * t + phase)
    elif isinstance(drive, DCDrive):
        half = drive.protocol.half_period
        on = (np.floor(t / half).astype(np.int64) % 2) == 0
        eps = cfg.dc_ratio_error + cfg.dc_drift.synthesize(n, fs, drift_rng)
        unbalance = np.where(on, drive.current, 0.0) * eps * per_amp
        mat = cfg.material
        slow_part = (1 - mat.hysteresis_attenuation) * _lowpass(
            unbalance, fs, lambda fr: 1.0 / (1.0 + 1j * fr / mat.eddy_corner_frequency)
        )
        peak = float(np.max(np.abs(slow_part)))
    else:
        raise ValidationError(f"unsupported drive {drive!r}")

    if abs(cfg.offset_field) - peak <= cfg.guard_field:
        raise ValidationError("drive pushes the operating point into the near-zero guard band")

    noise = np.zeros(n)
    if not cfg.noise.is_zero:
        noise = synthesize_noise(cfg.noise, fs, n / fs, noise_rng).samples

    if cfg.sensor_mode == "ideal":
        slow = slow_part + noise
        if np.any(slow):
            slow = _lowpass(slow, fs, lambda fr: _sensor_response(cfg, fr))
        return TimeSeries(fs, cfg.offset_field + ac_part + slow)

    field_in = TimeSeries(fs, cfg.offset_field + ac_part + slow_part + noise)
    tracked = track_field(field_in, cfg.sensor, cfg.tracker, initial_field=cfg.offset_field)
    if not tracked.all_valid:
        bad = int((~tracked.valid).sum())
        raise LockLossError(f"tracker lost lock on {bad} of {n} samples")
    return tracked


def _cell_seed(base: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), *[int(k) for k in keys]])


def _fit_record(fit: FitResult, units: dict) -> dict:
    return {
        "model": fit.model,
        "parameters": {k: quantity(v, units.get(k, "")) for k, v in fit.parameters.items()},
        "stderr": {k: quantity(math.sqrt(v) if v >= 0 else float("nan"), units.get(k, ""))
                   for k, v in fit.covariance_diag.items()},
        "residual_norm": quantity(fit.residual_norm, units.get("_residual", "")),
        "iterations": fit.iterations,
        "converged": fit.converged,
    }


def _provenance(cfg: ComparatorConfig, seed, time_scale: float) -> dict:
    return {
        "seed": int(cfg.seed if seed is None else seed),
        "time_scale": float(time_scale),
        "sample_rate": quantity(cfg.sample_rate / time_scale, "Hz"),
        "software": f"nvcomparator {__version__}",
        "created": timestamp(),
    }


def run_ac_campaign(cfg: ComparatorConfig, frequencies: Sequence[float], amplitudes: Sequence[float],
                    window: float = 1.0, repeats: int = 100, seed=None, time_scale: float = 1.0,
                    spectrum_max_frequency: float = 500.0) -> CampaignReport:
    """AC current-difference grid over drive frequency and amplitude.

    Each cell simulates ``repeats`` consecutive windows, extracts the
    single-bin amplitude per window and converts it to a current difference.
    Per-frequency line fits give the ratio error (slope); per-amplitude
    frequency-response fits recover (eps_h, eps_e).
    """
    frequencies = [float(f) for f in frequencies]
    amplitudes = [float(a) for a in amplitudes]
    if not frequencies or not amplitudes:
        raise ValidationError("frequency and amplitude sweeps must be non-empty")
    if repeats < 1:
        raise ValidationError("repeats must be >= 1")
    base = cfg.seed if seed is None else seed
    fs = cfg.sample_rate / time_scale
    wn = int(round(window * fs))

    cells = []
    grid = {}
    spectrum = None
    for i_f, f in enumerate(frequencies):
        for i_a, amp in enumerate(amplitudes):
            cell = {"frequency": quantity(f, "Hz"), "amplitude": quantity(amp, "A")}
            try:
                drive = ACDrive(f, amp)
                series = simulate_measurement(cfg, drive, repeats * window,
                                              seed=_cell_seed(base, i_f, i_a), time_scale=time_scale)
                coeff = system_coefficient(cfg, f)
                flux = window_amplitudes(series.samples, fs, f, wn)
                current = flux_to_current(flux, coeff)
                mean, se = mean_and_se(current)
                model_eps = cfg.ratio_error(f)
                cell.update({
                    "coefficient": quantity(coeff, "T/A"),
                    "flux_amplitude_mean": quantity(float(flux.mean()), "T"),
                    "current_difference": quantity(mean, "A"),
                    "current_difference_se": quantity(se, "A"),
                    "single_window_std": quantity(float(current.std(ddof=1)) if current.size > 1
                                                  else float("nan"), "A"),
                    "ratio_error": quantity(mean / amp if amp else float("nan"), "A/A"),
                    "ratio_error_se": quantity(se / amp if amp else float("nan"), "A/A"),
                    "model_ratio_error": quantity(model_eps, "A/A"),
                    "model_negative": bool(model_eps < 0),
                    "window_current_differences": sequence(current, "A"),
                    "error": None,
                })
                grid[(i_f, i_a)] = (mean, se)
                if spectrum is None:
                    freqs, amps = amplitude_spectrum(series.slice(0, wn),
                                                     max_frequency=spectrum_max_frequency)
                    spectrum = {
                        "drive_frequency": quantity(f, "Hz"),
                        "amplitude": quantity(amp, "A"),
                        "coefficient": quantity(coeff, "T/A"),
                        "frequency": sequence(freqs, "Hz"),
                        "flux": sequence(amps, "T"),
                        "current": sequence(amps / coeff, "A"),
                    }
            except (ValidationError, LockLossError) as exc:
                log.warning("AC cell f=%g Hz, I=%g A failed: %s", f, amp, exc)
                cell["error"] = f"{type(exc).__name__}: {exc}"
            cells.append(cell)

    linearity = []
    if len(amplitudes) >= 2:
        for i_f, f in enumerate(frequencies):
            pts = [(amplitudes[i_a], *grid[(i_f, i_a)]) for i_a in range(len(amplitudes))
                   if (i_f, i_a) in grid]
            entry = {"frequency": quantity(f, "Hz")}
            try:
                x, y, _ = zip(*pts) if pts else ((), (), ())
                fit = fit_line(x, y)
                entry["fit"] = _fit_record(fit, {"slope": "A/A", "intercept": "A", "_residual": "A"})
            except ValidationError as exc:
                entry["error"] = str(exc)
            linearity.append(entry)

    response = []
    if len(frequencies) >= 3:
        for i_a, amp in enumerate(amplitudes):
            pts = [(frequencies[i_f], grid[(i_f, i_a)][0]) for i_f in range(len(frequencies))
                   if (i_f, i_a) in grid]
            entry = {"amplitude": quantity(amp, "A")}
            try:
                x, y = zip(*pts) if pts else ((), ())
                fit = fit_frequency_response(x, y, "ratio-freq", amplitude=amp)
                entry["fit"] = _fit_record(fit, {**fit.units, "_residual": "A"})
            except (ValidationError, ConvergenceError) as exc:
                entry["error"] = str(exc)
            response.append(entry)

    results = {
        "window": quantity(window, "s"),
        "repeats": repeats,
        "cells": cells,
        "linearity": linearity,
        "frequency_response": response,
    }
    if spectrum is not None:
        results["spectrum"] = spectrum
    return CampaignReport("ac", cfg.to_dict(), results, _provenance(cfg, seed, time_scale))


def _allan_record(curve, coefficient: float, units: str) -> dict:
    """Allan curve of a current-difference sequence, also expressed as flux."""
    return {
        "tau": sequence(curve.taus, "s"),
        "sigma_T": sequence(curve.sigmas * coefficient, "T"),
        "sigma_A": sequence(curve.sigmas, units),
        "ci": sequence(curve.ci * coefficient, "T"),
        "pairs": sequence(curve.counts, "count"),
    }


def run_allan_campaign(cfg: ComparatorConfig, drive, total_duration: float, taus=None,
                       window: float = 1.0, seed=None, time_scale: float = 1.0) -> CampaignReport:
    """Allan deviation of the extracted current difference over one long run.

    AC: one current difference per ``window`` (single-bin extraction). DC:
    one per square-wave cycle. ``taus`` default to log spacing over the
    sequence.
    """
    base = cfg.seed if seed is None else seed
    fs = cfg.sample_rate / time_scale
    if isinstance(drive, ACDrive):
        windows = int(math.floor(total_duration / window))
        if windows < 3:
            raise ValidationError("total_duration must span at least three windows")
        series = simulate_measurement(cfg, drive, windows * window, seed=_cell_seed(base, 0),
                                      time_scale=time_scale)
        coeff = system_coefficient(cfg, drive.frequency)
        current = flux_to_current(
            window_amplitudes(series.samples, fs, drive.frequency, int(round(window * fs))), coeff
        )
        interval = window
        kind = "allan-ac"
        drive_rec = {"type": "ac", "frequency": quantity(drive.frequency, "Hz"),
                     "amplitude": quantity(drive.amplitude, "A")}
    elif isinstance(drive, DCDrive):
        proto = drive.protocol
        cycles = int(math.floor(total_duration / proto.period))
        if cycles < 3:
            raise ValidationError("total_duration must span at least three cycles")
        proto = replace(proto, cycles=cycles)
        series = simulate_measurement(cfg, DCDrive(drive.current, proto), cycles * proto.period,
                                      seed=_cell_seed(base, 0), time_scale=time_scale)
        coeff = system_coefficient(cfg, 0.0)
        extracted = square_wave_extract(series, proto)
        current = flux_to_current(extracted.per_cycle, coeff)
        interval = proto.period
        kind = "allan-dc"
        drive_rec = {"type": "dc", "current": quantity(drive.current, "A"),
                     "half_period": quantity(proto.half_period, "s"),
                     "transient_exclusion": quantity(proto.transient_exclusion, "s")}
    else:
        raise ValidationError(f"unsupported drive {drive!r}")

    seq = TimeSeries(1.0 / interval, current, units="A")
    if taus is None:
        taus = log_spaced_taus(seq, per_decade=10)
    curve = allan_deviation(seq, taus)
    if len(curve) == 0:
        raise ValidationError("no averaging time fits in the record")
    tau_min, sig_min = curve.minimum()
    try:
        slopes = [
            {"tau_start": quantity(s.tau_start, "s"), "tau_stop": quantity(s.tau_stop, "s"),
             "slope": s.slope, "label": s.label, "points": s.points}
            for s in noise_slope_id(curve)
        ]
    except ValidationError as exc:
        slopes = {"error": str(exc)}
    results = {
        "drive": drive_rec,
        "coefficient": quantity(coeff, "T/A"),
        "interval": quantity(interval, "s"),
        "sequence": sequence(current, "A"),
        "allan": _allan_record(curve, coeff, "A"),
        "omitted_taus": sequence(curve.omitted, "s"),
        "minimum": {
            "tau": quantity(tau_min, "s"),
            "sigma_A": quantity(sig_min, "A"),
            "sigma_T": quantity(sig_min * coeff, "T"),
        },
        "slopes": slopes,
    }
    return CampaignReport(kind, cfg.to_dict(), results, _provenance(cfg, seed, time_scale))


def run_dc_campaign(cfg: ComparatorConfig, current: float, proto: SquareWaveProtocol,
                    seed=None, time_scale: float = 1.0) -> CampaignReport:
    """Square-wave DC ratio measurement with transient exclusion."""
    if current < 0:
        raise ValidationError("current must be >= 0")
    base = cfg.seed if seed is None else seed
    series = simulate_measurement(cfg, DCDrive(current, proto), proto.duration,
                                  seed=_cell_seed(base, 0), time_scale=time_scale)
    coeff = system_coefficient(cfg, 0.0)
    res = square_wave_extract(series, proto)
    delta_i = flux_to_current(res.step, coeff)
    delta_se = flux_to_current(res.standard_error, coeff) if math.isfinite(res.standard_error) else float("nan")
    results = {
        "current": quantity(current, "A"),
        "protocol": {
            "half_period": quantity(proto.half_period, "s"),
            "transient_exclusion": quantity(proto.transient_exclusion, "s"),
            "cycles": proto.cycles,
        },
        "coefficient": quantity(coeff, "T/A"),
        "step": quantity(res.step, "T"),
        "step_se": quantity(res.standard_error, "T"),
        "off_mean": quantity(res.off_mean - cfg.offset_field, "T"),
        "current_difference": quantity(delta_i, "A"),
        "current_difference_se": quantity(delta_se, "A"),
        "ratio_error": quantity(delta_i / current if current else float("nan"), "A/A"),
        "ratio_error_se": quantity(delta_se / current if current else float("nan"), "A/A"),
        "cycle_period": quantity(proto.period, "s"),
        "per_cycle_step": sequence(res.per_cycle, "T"),
    }
    return CampaignReport("dc", cfg.to_dict(), results, _provenance(cfg, seed, time_scale))
