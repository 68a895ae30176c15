import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvcomparator.noise import NoiseModel
from nvcomparator.nvsensor import (
    SensorPhysics,
    TrackerConfig,
    discriminator_slope,
    field_from_resonances,
    fm_error_signal,
    lock_pull,
    odmr_spectrum,
    shot_noise_limit,
    track_field,
    zeeman_resonances,
)
from nvcomparator.series import TimeSeries, ValidationError

PHYS = SensorPhysics()
CFG = TrackerConfig()


@pytest.mark.parametrize("kw", [
    dict(gyromagnetic_ratio=0.0), dict(contrast=0.0), dict(contrast=1.0),
    dict(linewidth_fwhm=0.0), dict(photon_rate=0.0), dict(zero_field_splitting=0.0),
])
def test_sensor_invariants(kw):
    with pytest.raises(ValidationError):
        SensorPhysics(**kw)


def test_tracker_invariants():
    with pytest.raises(ValidationError):
        TrackerConfig(loop_gain=0.0)
    with pytest.raises(ValidationError):
        CFG.check_rate(500.0)


def test_zeeman_examples():
    assert zeeman_resonances(PHYS, 0.0) == (2.87e9, 2.87e9)
    fm, fp = zeeman_resonances(PHYS, 1e-3)
    assert fp - fm == pytest.approx(56.048e6, rel=1e-12)


@given(st.floats(-1.0, 1.0))
def test_zeeman_round_trip(b):
    fm, fp = zeeman_resonances(PHYS, b)
    assert field_from_resonances(PHYS, fm, fp) == pytest.approx(b, rel=1e-9, abs=1e-15)


def test_odmr_examples():
    b = 1e-3
    fm, fp = zeeman_resonances(PHYS, b)
    partner = 1 / (1 + (2 * (fp - fm) / PHYS.linewidth_fwhm) ** 2)
    assert odmr_spectrum(PHYS, b, fp) == pytest.approx(1 - PHYS.contrast * (1 + partner), rel=1e-15)
    assert odmr_spectrum(PHYS, b, fp) == pytest.approx(1 - PHYS.contrast, rel=1e-6)
    assert odmr_spectrum(PHYS, b, 1e12) == pytest.approx(1.0, abs=1e-9)
    assert odmr_spectrum(PHYS, 0.0, PHYS.zero_field_splitting) == pytest.approx(1 - 2 * PHYS.contrast)
    with pytest.raises(ValidationError):
        odmr_spectrum(PHYS, b, 0.0)


@given(st.floats(-1e-2, 1e-2), st.floats(2.5e9, 3.2e9))
def test_odmr_bounded_and_symmetric(b, f):
    pl = odmr_spectrum(PHYS, b, f)
    # the full 2C depth is reached only when both lines coincide (b = 0)
    assert 1 - 2 * PHYS.contrast <= pl <= 1
    if abs(b) > 1e-9:  # smaller splittings round to the b = 0 depth
        assert pl > 1 - 2 * PHYS.contrast
    assert odmr_spectrum(PHYS, -b, f) == pytest.approx(pl, rel=1e-14)


def test_fm_error_zero_on_resonance():
    far = 1.0  # partner line 56 GHz away
    _, fp = zeeman_resonances(PHYS, far)
    assert abs(fm_error_signal(PHYS, far, fp, CFG)) < 1e-15
    # with the partner 56 MHz away the null moves by the lock pull only
    b = 1e-3
    _, fp = zeeman_resonances(PHYS, b)
    pull = float(lock_pull(PHYS, CFG, b))
    assert abs(pull) < 1e-5 * PHYS.linewidth_fwhm
    assert abs(fm_error_signal(PHYS, b, fp + pull, CFG)) < 1e-15


def test_fm_error_matches_derivative_at_half_width():
    cfg = TrackerConfig(fm_deviation=PHYS.linewidth_fwhm / 10)
    b = 1e-3
    _, fp = zeeman_resonances(PHYS, b)
    f = fp + PHYS.linewidth_fwhm / 2
    # -delta * dPL/df for a unit-peak Lorentzian at its half-width point
    u = 2 * (f - fp) / PHYS.linewidth_fwhm
    dpl = PHYS.contrast * 8 * (f - fp) / PHYS.linewidth_fwhm**2 / (1 + u * u) ** 2
    expected = -cfg.fm_deviation * dpl
    assert fm_error_signal(PHYS, b, f, cfg) == pytest.approx(expected, rel=0.05)


def test_discriminator_slope():
    slope = discriminator_slope(PHYS, CFG)
    analytic = -8 * PHYS.contrast * CFG.fm_deviation / PHYS.linewidth_fwhm**2
    assert slope < 0
    assert slope == pytest.approx(analytic, rel=0.1)


def test_fm_error_raises_for_large_deviation():
    with pytest.raises(ValidationError):
        fm_error_signal(PHYS, 1e-3, 2.9e9, TrackerConfig(fm_deviation=2e6))


@pytest.mark.parametrize("line", [0, 1])
def test_single_zero_crossing_per_resonance(line):
    b = 1e-3
    center = zeeman_resonances(PHYS, b)[line]
    f = center + np.linspace(-1, 1, 2001) * PHYS.linewidth_fwhm
    err = fm_error_signal(PHYS, b, f, CFG)
    crossings = np.flatnonzero(np.diff(np.sign(err)) != 0)
    assert crossings.size == 1
    i = crossings[0]
    assert err[i] > 0 > err[i + 1]
    assert abs(f[i] - center) <= 2e-3 * PHYS.linewidth_fwhm


def test_error_slope_versus_field_flips_between_lines():
    b, db = 1e-3, 1e-9
    fm, fp = zeeman_resonances(PHYS, b)
    d_plus = (fm_error_signal(PHYS, b + db, fp, CFG) - fm_error_signal(PHYS, b - db, fp, CFG)) / (2 * db)
    d_minus = (fm_error_signal(PHYS, b + db, fm, CFG) - fm_error_signal(PHYS, b - db, fm, CFG)) / (2 * db)
    assert d_plus * d_minus < 0


def test_shot_noise_limit():
    assert shot_noise_limit(PHYS) == pytest.approx(86.8656322367e-12, rel=1e-9)
    double_c = SensorPhysics(contrast=0.02)
    quad_r = SensorPhysics(photon_rate=4e15)
    assert shot_noise_limit(double_c) == pytest.approx(shot_noise_limit(PHYS) / 2, rel=1e-14)
    assert shot_noise_limit(quad_r) == pytest.approx(shot_noise_limit(PHYS) / 2, rel=1e-14)


def test_track_static_field_settles():
    fs = 10_000.0
    n = 2000
    est = track_field(TimeSeries(fs, np.full(n, 50e-6)), PHYS, CFG, initial_field=49e-6)
    settle = int(10 / CFG.loop_bandwidth * fs)
    tail = est.samples[settle:]
    assert np.max(np.abs(tail / 50e-6 - 1)) < 1e-6
    assert est.valid[settle:].all()


def test_track_ramp_lag_first_order():
    fs, bw, rate = 10_000.0, 30.0, 1e-4
    cfg = TrackerConfig(loop_bandwidth=bw)
    t = np.arange(20_000) / fs
    truth = 100e-6 + rate * t
    est = track_field(TimeSeries(fs, truth), PHYS, cfg)
    lag = np.mean((truth - est.samples)[-5000:])
    assert lag == pytest.approx(rate / (2 * math.pi * bw), rel=0.2)
    assert est.all_valid


def test_track_zero_field_flags_guard_band():
    est = track_field(TimeSeries(10_000.0, np.zeros(500)), PHYS, CFG)
    assert not est.valid.any()


def test_track_fast_step_flags_lock_loss():
    b = np.full(400, 100e-6)
    b[200:] = 400e-6
    est = track_field(TimeSeries(10_000.0, b), PHYS, CFG)
    assert est.valid[:200].all()
    assert not est.valid[200:].any()


def test_track_noisy_constant_field_unbiased():
    fs, n = 10_000.0, 20_000
    noise = NoiseModel(white_asd=300e-12)
    est = track_field(TimeSeries(fs, np.full(n, 100e-6)), PHYS, CFG, noise=noise, seed=3)
    x = est.samples[1000:] - 100e-6
    # standard error of the mean of white noise with one-sided ASD d over T is d / sqrt(2 T)
    sigma_mean = 300e-12 / math.sqrt(2 * x.size / fs)
    assert abs(x.mean()) < 5 * sigma_mean
    assert est.all_valid
