import dataclasses
import json

import numpy as np
import pytest
from scipy import signal
from scipy.spatial.transform import Rotation

from hiss.errors import CalibError, ExtrapolationError, FilterError, LengthError, RateError
from hiss.preprocess import (FrameCalib, NormStats, PreprocessConfig, RawChannelSeries,
                             align_pair, analog_magnitude, append_diffs, butterworth_lowpass,
                             denormalize, design_butterworth, fit_stats, frequency_response, grid,
                             imu_to_reference, normalize, preprocess_sensor, quat_to_matrix,
                             resample, subtract_resting)

FS = 50.0


def steady_amplitude(spec, f, seconds=40.0):
    """Filter a unit sine and least-squares fit the amplitude over the last quarter."""
    t = np.arange(int(seconds * FS)) / FS
    y = butterworth_lowpass(np.sin(2 * np.pi * f * t)[:, None], spec)[:, 0]
    tail = slice(3 * t.size // 4, None)
    basis = np.stack([np.sin(2 * np.pi * f * t[tail]), np.cos(2 * np.pi * f * t[tail])], 1)
    coef, *_ = np.linalg.lstsq(basis, y[tail], rcond=None)
    return float(np.hypot(*coef))


# --- resampling -----------------------------------------------------------------------------

def test_resample_constant_and_ramp():
    t = np.sort(np.random.default_rng(0).uniform(0, 5, 60))
    t[0] = 0.0
    const = resample(RawChannelSeries(t, np.full(60, 3.5), 12), 50)
    assert np.all(const == 3.5)
    ramp = resample(RawChannelSeries(t, 2.0 * t + 1.0, 12), 50)
    g = grid(t[0], 50, ramp.shape[0])
    assert np.abs(ramp[:, 0] - (2.0 * g + 1.0)).max() < 1e-12


def test_resample_sine_within_linear_interpolation_bound():
    t = np.arange(0, 10, 1 / 37)
    out = resample(RawChannelSeries(t, np.sin(2 * np.pi * t), 37), 50)
    g = grid(0.0, 50, out.shape[0])
    err = np.abs(out[:, 0] - np.sin(2 * np.pi * g)).max()
    bound = (1 / 37) ** 2 / 8 * (2 * np.pi) ** 2  # h^2/8 * max|f''|
    assert err <= bound
    assert err < 3.6e-3


def test_resample_errors():
    s = RawChannelSeries(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 1)
    with pytest.raises(ExtrapolationError):
        resample(s, 10, n=12)
    with pytest.raises(RateError):
        resample(s, 0)
    with pytest.raises(LengthError):
        resample(RawChannelSeries(np.array([0.0]), np.array([1.0]), 1), 10)
    with pytest.raises(ValueError):
        RawChannelSeries(np.array([0.0, 0.0]), np.array([1.0, 2.0]), 1)


def test_align_pair_is_phase_locked():
    ts = np.arange(0, 7.3, 1 / 97)
    tl = np.arange(0.05, 7.0, 1 / 120)
    s = RawChannelSeries(ts, 3 * ts, 97)
    y = RawChannelSeries(tl, 3 * tl, 120)
    S, Y = align_pair(s, y)
    assert S.shape[0] == 10 * Y.shape[0]
    # each label tick sits on the last sensor sample of its window
    assert np.allclose(S[9::10, 0], Y[:, 0], atol=1e-12)


def test_resampling_is_causal_at_grid_resolution():
    ts = np.arange(0, 4, 1 / 37)
    x = np.random.default_rng(1).normal(size=ts.size)
    cut = 80
    x2 = x.copy()
    x2[cut:] += 1.0
    a = resample(RawChannelSeries(ts, x, 37), 50)
    b = resample(RawChannelSeries(ts, x2, 37), 50)
    g = grid(0.0, 50, a.shape[0])
    # grid points before the sample preceding the change are untouched
    untouched = g < ts[cut - 1] - 1e-12
    assert np.array_equal(a[untouched], b[untouched])


# --- resting / diffs / normalization ------------------------------------------------------

def test_subtract_resting_examples():
    assert np.all(subtract_resting(np.full((40, 2), 7.0)) == 0)
    x = np.r_[np.full(30, 5.0), np.full(20, 8.0)][:, None]
    out = subtract_resting(x, 25)
    assert np.all(out[:30] == 0) and np.all(out[30:] == 3)
    with pytest.raises(LengthError):
        subtract_resting(np.zeros((10, 1)), 25)


def test_resting_mean_zero(rng):
    out = subtract_resting(rng.normal(size=(200, 4)) + 3.0, 25)
    assert np.abs(out[:25].mean(0)).max() < 1e-12


def test_append_diffs_examples_and_telescoping(rng):
    c = append_diffs(np.full((5, 3), 2.0))
    assert c.shape == (5, 6) and np.all(c[:, 3:] == 0)
    ramp = append_diffs(0.5 * np.arange(6.0)[:, None])
    assert ramp[0, 1] == 0 and np.all(ramp[1:, 1] == 0.5)
    x = rng.normal(size=(50, 3))
    d = append_diffs(x)[:, 3:]
    assert np.abs(np.cumsum(d, 0) + x[0] - x).max() < 1e-12


def test_resting_then_diffs_keeps_diff_channel(rng):
    x = rng.normal(size=(60, 2)) + 10
    a = append_diffs(subtract_resting(x))[:, 2:]
    b = append_diffs(x)[:, 2:]
    assert np.abs(a - b).max() < 1e-12


def test_normalization_fit_apply_round_trip(rng, tmp_path):
    x = rng.normal(3.0, 2.5, size=(400, 3))
    stats = fit_stats([x[:150], x[150:]])
    z = normalize(x, stats)
    assert np.abs(z.mean(0)).max() < 1e-10 and np.abs(z.std(0) - 1).max() < 1e-10
    assert np.abs(denormalize(z, stats) - x).max() < 1e-12
    with pytest.raises(dataclasses.FrozenInstanceError):
        stats.mean = (0.0,)
    stats.save(tmp_path / "s.json")
    assert NormStats.load(tmp_path / "s.json") == stats
    json.loads((tmp_path / "s.json").read_text())


def test_constant_dimension_is_flagged_and_passed_unscaled():
    x = np.c_[np.arange(10.0), np.full(10, 4.0)]
    with pytest.warns(RuntimeWarning):
        stats = fit_stats([x])
    assert stats.constant == (1,)
    z = normalize(x, stats)
    assert np.all(z[:, 1] == 0.0)


def test_pointwise_ops_are_causal(rng):
    x = rng.normal(size=(120, 3))
    y = x.copy()
    y[70:] += rng.normal(size=(50, 3))
    stats = fit_stats([x])
    spec = design_butterworth(5, 2.5, FS)
    cfg = PreprocessConfig(filter={"order": 5, "cutoff_hz": 2.5})
    for op in (append_diffs, lambda v: normalize(v, stats), lambda v: butterworth_lowpass(v, spec),
               lambda v: preprocess_sensor(v, cfg, FS)):
        assert np.array_equal(op(x)[:70], op(y)[:70])
    # resting subtraction is causal once its calibration window has closed
    assert np.array_equal(subtract_resting(x)[:70], subtract_resting(y)[:70])


# --- Butterworth ----------------------------------------------------------------------------

@pytest.mark.parametrize("order", [1, 3, 5, 8])
@pytest.mark.parametrize("cutoff", [0.75, 2.5, 7.5, 20.0])
def test_design_matches_reference_coefficients(order, cutoff):
    spec = design_butterworth(order, cutoff, FS)
    b, a = signal.butter(order, cutoff, fs=FS)
    assert np.allclose(spec.b, b, rtol=1e-10, atol=1e-14)
    assert np.allclose(spec.a, a, rtol=1e-10, atol=1e-12)
    assert np.all(np.abs(spec.poles) < 1)


@pytest.mark.parametrize("cutoff", [0.75, 2.5, 7.5])
def test_dc_gain_and_minus_3db(cutoff):
    spec = design_butterworth(5, cutoff, FS)
    assert abs(frequency_response(spec, [0.0])[0] - 1.0) < 1e-9
    y = butterworth_lowpass(np.full((4000, 1), 2.0), spec)
    assert abs(y[-1, 0] - 2.0) < 1e-9
    db = 20 * np.log10(steady_amplitude(spec, cutoff))
    assert abs(db - 20 * np.log10(1 / np.sqrt(2))) < 0.2


def test_measured_response_follows_analog_prototype():
    spec = design_butterworth(5, 2.5, FS)
    freqs = np.linspace(0.5, 12.0, 10)
    measured = np.array([steady_amplitude(spec, f) for f in freqs])
    # bilinear mapping is exact once the analog frequency axis is pre-warped
    assert np.abs(measured - analog_magnitude(spec, freqs)).max() < 1e-6
    # unwarped prototype differs only by the warp, which is bounded here
    unwarped = 1 / np.sqrt(1 + (freqs / 2.5) ** 10)
    warp_tol = np.abs(analog_magnitude(spec, freqs) - unwarped).max() + 1e-6
    assert np.abs(measured - unwarped).max() <= warp_tol
    assert warp_tol < 0.05


@pytest.mark.parametrize("cutoff", [0.75, 2.5, 7.5])
def test_impulse_response_decays(cutoff):
    impulse = np.zeros((2000, 1))
    impulse[0] = 1.0
    h = butterworth_lowpass(impulse, design_butterworth(5, cutoff, FS))[:, 0]
    assert np.abs(h[1000:]).max() < 1e-9


def test_filter_rejects_bad_cutoffs():
    for fc in (25.0, 30.0, 0.0, -1.0):
        with pytest.raises(FilterError):
            design_butterworth(5, fc, FS)
    with pytest.raises(FilterError):
        design_butterworth(0, 2.0, FS)


# --- frame transform ------------------------------------------------------------------------

def test_quaternion_matrix_matches_scipy(rng):
    q = rng.normal(size=(20, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ref = Rotation.from_quat(q[:, [1, 2, 3, 0]]).as_matrix()
    assert np.abs(quat_to_matrix(q) - ref).max() < 1e-12


def test_identity_and_axis_rotation():
    a = np.array([[1.0, 0.0, 0.0], [0.3, -2.0, 5.0]])
    ident = FrameCalib(np.tile([1.0, 0, 0, 0], (2, 1)), [1.0, 0, 0, 0])
    assert np.array_equal(imu_to_reference(a, ident), a)
    h = np.sqrt(0.5)
    rot = FrameCalib([[h, 0, 0, h]], [1.0, 0, 0, 0])
    assert np.abs(imu_to_reference(a[:1], rot) - [[0.0, 1.0, 0.0]]).max() < 1e-15


def test_composition_order_and_norm_preservation(rng):
    T = 50
    q_imu = rng.normal(size=(T, 4))
    q_imu /= np.linalg.norm(q_imu, axis=1, keepdims=True)
    q_ref = rng.normal(size=4)
    q_ref /= np.linalg.norm(q_ref)
    a = rng.normal(size=(T, 3))
    out = imu_to_reference(a, FrameCalib(q_imu, q_ref))
    step = np.einsum("tij,tj->ti", quat_to_matrix(q_imu), a)  # IMU -> inertial first
    seq = step @ quat_to_matrix(q_ref).T  # then inertial -> reference
    assert np.abs(out - seq).max() < 1e-12
    wrong = np.einsum("tij,tj->ti", quat_to_matrix(q_imu), a @ quat_to_matrix(q_ref).T)
    assert np.abs(out - wrong).max() > 1e-3
    assert np.abs(np.linalg.norm(out, axis=1) - np.linalg.norm(a, axis=1)).max() < 1e-12


def test_calibration_file_order_and_unit_check():
    h = np.sqrt(0.5)
    c = FrameCalib.from_recorded([[1.0, 0, 0, 0]], [0, 0, h, h])  # (x, y, z, w)
    assert np.allclose(c.q_inertial_to_ref, [h, 0, 0, h])
    near = FrameCalib([[1.0 + 5e-7, 0, 0, 0]], [1.0, 0, 0, 0])
    assert abs(np.linalg.norm(near.q_imu_to_inertial) - 1.0) < 1e-9
    with pytest.raises(CalibError):
        FrameCalib([[1.0 + 1e-5, 0, 0, 0]], [1.0, 0, 0, 0])
    with pytest.raises(CalibError):
        FrameCalib([[1.0, 0, 0, 0]], [0.9, 0, 0, 0])
