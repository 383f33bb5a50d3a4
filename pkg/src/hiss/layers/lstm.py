"""LSTM recurrence with a hand-written backward pass through time."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ShapeError
from ..ndgrad import Tensor, as_tensor, make_result, matmul

# gate layout along the 4H axis: input, forget, cell, output


def lstm_recurrence(xg, W_hh) -> Tensor:
    """Run the cell over precomputed input projections.

    ``xg`` is ``(..., T, 4H)`` (input weights and bias already applied),
    ``W_hh`` is ``(H, 4H)``. Returns hidden states ``(..., T, H)``; state
    starts at zero.
    """
    xg, W_hh = as_tensor(xg), as_tensor(W_hh)
    H = W_hh.shape[0]
    if W_hh.shape != (H, 4 * H) or xg.shape[-1] != 4 * H:
        raise ShapeError(f"gate shapes {xg.shape} / {W_hh.shape} do not fit hidden size {H}")
    X, W = xg.data, W_hh.data
    T = X.shape[-2]
    lead = X.shape[:-2]
    gates = np.empty(lead + (T, 4 * H))
    cs = np.empty(lead + (T, H))
    hs = np.empty(lead + (T, H))
    h = np.zeros(lead + (H,))
    c = np.zeros(lead + (H,))
    for t in range(T):
        pre = X[..., t, :] + h @ W
        i = expit(pre[..., :H])
        f = expit(pre[..., H:2 * H])
        g = np.tanh(pre[..., 2 * H:3 * H])
        o = expit(pre[..., 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[..., t, :] = np.concatenate([i, f, g, o], axis=-1)
        cs[..., t, :] = c
        hs[..., t, :] = h

    def backward(gy):
        dX = np.empty_like(X)
        dW = np.zeros_like(W)
        dh_next = np.zeros(lead + (H,))
        dc_next = np.zeros(lead + (H,))
        for t in range(T - 1, -1, -1):
            i = gates[..., t, :H]
            f = gates[..., t, H:2 * H]
            g = gates[..., t, 2 * H:3 * H]
            o = gates[..., t, 3 * H:]
            tc = np.tanh(cs[..., t, :])
            c_prev = cs[..., t - 1, :] if t > 0 else np.zeros_like(tc)
            h_prev = hs[..., t - 1, :] if t > 0 else np.zeros_like(tc)
            dh = gy[..., t, :] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dpre = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ], axis=-1)
            dX[..., t, :] = dpre
            dW += h_prev.reshape(-1, H).T @ dpre.reshape(-1, 4 * H)
            dh_next = dpre @ W.T
            dc_next = dc * f
        return dX, dW

    return make_result("lstm", hs, (xg, W_hh), backward)


def lstm_forward(weights: dict, u) -> Tensor:
    """Full LSTM over ``u`` with weights ``W_ih (d, 4H)``, ``W_hh (H, 4H)``, ``b (4H,)``."""
    u = as_tensor(u)
    W_ih, W_hh, b = weights["W_ih"], weights["W_hh"], weights["b"]
    if W_ih.shape[0] != u.shape[-1] or W_ih.shape[1] != b.shape[0]:
        raise ShapeError(f"W_ih {W_ih.shape} / b {b.shape} do not fit input {u.shape}")
    return lstm_recurrence(matmul(u, W_ih) + b, W_hh)


def init_lstm(d_in: int, hidden: int, rng: np.random.Generator) -> dict:
    s = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    return {
        "W_ih": Tensor(rng.uniform(-s, s, (d_in, 4 * hidden)), requires_grad=True),
        "W_hh": Tensor(rng.uniform(-s, s, (hidden, 4 * hidden)), requires_grad=True),
        "b": Tensor(b, requires_grad=True),
    }
