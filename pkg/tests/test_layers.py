import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.special import expit

from hiss.errors import ConfigError, NumericalError, ShapeError
from hiss.layers import (LayerStackSpec, SelectiveParams, SsmParams, associative_scan,
                         attention_core, discretize, dssm_convolutional, dssm_kernel,
                         dssm_recurrent, init_stack, lstm_forward, init_lstm, parameter_count,
                         selective_core, selective_scan, sequential_scan, stack_forward)
from hiss.ndgrad import Tensor, gradcheck, no_grad
from hiss.ndgrad import sum as tsum


def random_ssm(rng, H=3, n=4):
    A = -rng.uniform(0.1, 1.0, (H, n)) + 1j * rng.uniform(-3, 3, (H, n))
    B = rng.normal(size=(H, n)) + 1j * rng.normal(size=(H, n))
    C = rng.normal(size=(H, n)) + 1j * rng.normal(size=(H, n))
    p = SsmParams.from_complex(A, B, C, rng.normal(size=H), rng.uniform(0.01, 0.5, H))
    for t in p.tensors():
        t.requires_grad = True
    return p


# --- diagonal SSM ---------------------------------------------------------------------------

def test_zoh_input_matrix_matches_quadrature(rng):
    p = random_ssm(rng)
    Abar, Bbar = discretize(p)
    assert np.allclose(Abar, np.exp(p.dt[:, None] * p.A), rtol=0, atol=1e-15)
    # B_bar = integral_0^dt exp(A s) ds * B, trapezoid rule with 1e4 steps
    for h in range(p.channels):
        s = np.linspace(0.0, p.dt[h], 10_001)
        f = np.exp(p.A[h][:, None] * s[None, :])
        integral = trapezoid(f, s, axis=1)
        assert np.abs(integral * p.Bc[h] - Bbar[h]).max() < 1e-9


def test_tiny_A_uses_analytic_limit():
    p = SsmParams.from_complex([[-1e-14 + 0j]], [[2.0 + 1j]], [[1.0]], [0.0], [0.1])
    _, Bbar = discretize(p)
    assert abs(Bbar[0, 0] - 0.1 * (2.0 + 1j)) < 1e-15


def test_kernel_matches_explicit_powers(rng):
    p = random_ssm(rng)
    Abar, Bbar = discretize(p)
    K = dssm_kernel(p, 9).data
    for t in range(9):
        ref = 2.0 * (p.Cc * Abar ** t * Bbar).sum(-1).real
        assert np.abs(K[:, t] - ref).max() < 1e-12


def test_constant_input_reaches_geometric_steady_state(rng):
    p = random_ssm(rng)
    Abar, Bbar = discretize(p)
    T = 4000
    y = dssm_recurrent(p, np.ones((T, p.channels))).data
    steady = 2.0 * (p.Cc * Bbar / (1.0 - Abar)).sum(-1).real + p.D.data
    assert np.abs(y[-1] - steady).max() < 1e-9


def test_recurrent_and_convolutional_agree(rng):
    p = random_ssm(rng)
    u = rng.normal(size=(2, 50, p.channels))
    assert np.abs(dssm_recurrent(p, u).data - dssm_convolutional(p, u).data).max() < 1e-10


@pytest.mark.parametrize("path", [dssm_recurrent, dssm_convolutional])
def test_dssm_gradients(path, rng):
    p = random_ssm(rng, H=2, n=3)
    u = Tensor(rng.normal(size=(2, 11, 2)), requires_grad=True)
    w = rng.normal(size=(2, 11, 2))
    assert gradcheck(lambda: tsum(path(p, u) * w), [u] + p.tensors()) < 1e-5


def test_dssm_shape_errors(rng):
    p = random_ssm(rng)
    with pytest.raises(ShapeError):
        dssm_recurrent(p, np.ones((5, p.channels + 1)))
    with pytest.raises(ShapeError):
        dssm_kernel(p, 0)


def test_dssm_recurrence_reports_failing_timestep(rng):
    p = random_ssm(rng, H=1, n=1)
    u = np.zeros((8, 1))
    u[5] = np.inf
    with pytest.raises(NumericalError) as info:
        with np.errstate(over="ignore", invalid="ignore"):
            dssm_recurrent(p, u)
    assert info.value.timestep == 5


# --- scans ----------------------------------------------------------------------------------

@pytest.mark.parametrize("T", [1, 2, 3, 7, 8, 100, 1000])
def test_associative_scan_matches_loop(T, rng):
    a = rng.uniform(-1, 1, (T, 3)) + 1j * rng.uniform(-0.5, 0.5, (T, 3))
    b = rng.normal(size=(T, 3)) + 1j * rng.normal(size=(T, 3))
    for reverse in (False, True):
        ref = sequential_scan(a, b, reverse=reverse)
        assert np.abs(associative_scan(a, b, reverse=reverse) - ref).max() < 1e-12


def test_scan_along_other_axis(rng):
    a, b = rng.uniform(0, 1, (2, 9, 3)), rng.normal(size=(2, 9, 3))
    x = associative_scan(a, b, axis=1)
    manual = np.zeros((2, 3))
    for t in range(9):
        manual = a[:, t] * manual + b[:, t]
        assert np.allclose(x[:, t], manual, atol=1e-13)


# --- selective ------------------------------------------------------------------------------

def naive_selective(u, delta, Bm, Cm, A, D):
    T, H = u.shape
    x = np.zeros((H, Bm.shape[1]), dtype=complex)
    y = np.zeros((T, H))
    for t in range(T):
        for h in range(H):
            for j in range(Bm.shape[1]):
                x[h, j] = np.exp(delta[t, h] * A[h, j]) * x[h, j] + delta[t, h] * Bm[t, j] * u[t, h]
            y[t, h] = sum(Cm[t, j] * x[h, j].real for j in range(Bm.shape[1])) + D[h] * u[t, h]
    return y


@pytest.mark.parametrize("mode", ["scan", "loop"])
def test_selective_core_matches_naive_loop(mode, rng):
    T, H, n = 13, 2, 3
    u, delta = rng.normal(size=(T, H)), rng.uniform(0.01, 0.5, (T, H))
    Bm, Cm = rng.normal(size=(T, n)), rng.normal(size=(T, n))
    A_log_re, A_im, D = rng.normal(size=(H, n)), rng.normal(size=(H, n)), rng.normal(size=H)
    y = selective_core(u, delta, Bm, Cm, A_log_re, A_im, D, mode=mode).data
    ref = naive_selective(u, delta, Bm, Cm, -np.exp(A_log_re) + 1j * A_im, D)
    assert np.abs(y - ref).max() < 1e-12


def test_selective_gradients(rng):
    p = SelectiveParams.init(3, 4, rng)
    u = Tensor(rng.normal(size=(2, 9, 3)), requires_grad=True)
    w = rng.normal(size=(2, 9, 3))
    params = [u] + [getattr(p, k) for k in SelectiveParams.NAMES]
    assert gradcheck(lambda: tsum(selective_scan(p, u) * w), params) < 1e-5


# --- LSTM -----------------------------------------------------------------------------------

def test_lstm_matches_scalar_reference(rng):
    d, H, T = 2, 3, 6
    w = init_lstm(d, H, rng)
    u = rng.normal(size=(T, d))
    y = lstm_forward(w, u).data
    Wi, Wh, b = w["W_ih"].data, w["W_hh"].data, w["b"].data
    h, c = np.zeros(H), np.zeros(H)
    for t in range(T):
        pre = u[t] @ Wi + h @ Wh + b
        i, f = expit(pre[:H]), expit(pre[H:2 * H])
        g, o = np.tanh(pre[2 * H:3 * H]), expit(pre[3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        assert np.abs(y[t] - h).max() < 1e-14


def test_lstm_gradients(rng):
    w = init_lstm(2, 3, rng)
    u = Tensor(rng.normal(size=(2, 7, 2)), requires_grad=True)
    target = rng.normal(size=(2, 7, 3))
    assert gradcheck(lambda: tsum(lstm_forward(w, u) * target), [u] + list(w.values())) < 1e-6


# --- attention ------------------------------------------------------------------------------

def naive_attention(q, k, v):
    T, d = q.shape
    out = np.zeros_like(v)
    for t in range(T):
        s = np.array([q[t] @ k[j] / np.sqrt(d) for j in range(t + 1)])
        p = np.exp(s - s.max())
        out[t] = (p / p.sum()) @ v[:t + 1]
    return out


@pytest.mark.parametrize("block", [1, 4, 256])
def test_attention_matches_naive_softmax(block, rng):
    q, k, v = (rng.normal(size=(10, 4)) for _ in range(3))
    assert np.abs(attention_core(q, k, v, block=block).data - naive_attention(q, k, v)).max() < 1e-13


def test_attention_gradients(rng):
    q, k, v = (Tensor(rng.normal(size=(2, 9, 3)), requires_grad=True) for _ in range(3))
    w = rng.normal(size=(2, 9, 3))
    assert gradcheck(lambda: tsum(attention_core(q, k, v, block=4) * w), [q, k, v]) < 1e-6


# --- stacks ---------------------------------------------------------------------------------

ALL_SPECS = [
    LayerStackSpec("dssm", 2, 5, 3, 2), LayerStackSpec("dssm", 1, 5, 3, 2, mode="recurrent"),
    LayerStackSpec("selective", 2, 4, 3, 2), LayerStackSpec("selective", 1, 4, 3, 2, mode="loop"),
    LayerStackSpec("lstm", 2, 4, 3, 2), LayerStackSpec("attention", 2, 4, 3, 2),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-{s.path}")
def test_parameter_count_matches_initialised_tensors(spec, rng):
    params = init_stack(spec, rng)
    assert parameter_count(spec) == sum(p.size for p in params.values())


def test_dssm_stack_hand_count():
    # width 64, depth 2, 16 states, 30 -> 2
    W, n = 64, 16
    ssm = 2 * W * n + 2 * W * n + 2 * W * n + W + W  # A(re, im), B, C complex pairs, D, log_dt
    layer = ssm + (W * W + W) + 2 * W  # output projection, layer norm
    expected = (30 * W + W) + 2 * layer + (W * 2 + 2)
    assert parameter_count(LayerStackSpec("dssm", 2, 64, 30, 2)) == expected == 23_234


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-{s.path}")
def test_stack_output_shape_and_causality(spec, rng):
    params = init_stack(spec, rng)
    u = rng.normal(size=(2, 24, spec.d_in))
    with no_grad():
        y = stack_forward(spec, params, u).data
        assert y.shape == (2, 24, spec.d_out)
        t0 = 13
        v = u.copy()
        v[:, t0:] += rng.normal(size=v[:, t0:].shape)
        y2 = stack_forward(spec, params, v).data
    exact = spec.path != "conv"
    diff = np.abs(y2[:, :t0] - y[:, :t0]).max()
    assert diff == 0.0 if exact else diff < 1e-12
    assert np.abs(y2[:, t0] - y[:, t0]).max() > 0


def test_stack_spec_validation():
    with pytest.raises(ConfigError):
        LayerStackSpec("gru", 1, 4, 2, 2)
    with pytest.raises(ConfigError):
        LayerStackSpec("dssm", 1, 4, 2, 2, mode="scan")
    with pytest.raises(ConfigError):
        LayerStackSpec("lstm", 0, 4, 2, 2)
    with pytest.raises(ConfigError):
        LayerStackSpec.from_dict({"kind": "dssm", "depth": 1, "width": 4, "d_in": 2, "d_out": 2, "x": 1})


def test_stack_dropout_needs_training_rng(rng):
    spec = LayerStackSpec("dssm", 1, 4, 2, 2, dropout=0.5)
    params = init_stack(spec, rng)
    u = rng.normal(size=(1, 8, 2))
    a = stack_forward(spec, params, u, training=True, rng=np.random.default_rng(0)).data
    b = stack_forward(spec, params, u, training=True, rng=np.random.default_rng(0)).data
    c = stack_forward(spec, params, u).data
    assert np.array_equal(a, b) and not np.array_equal(a, c)
