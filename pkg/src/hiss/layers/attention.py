"""Single-head causal self-attention.

The core is evaluated in query blocks against the causal key prefix and
recomputed blockwise in the backward pass, so memory stays O(T * block)
while compute remains quadratic in T.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..ndgrad import Tensor, as_tensor, make_result, matmul

BLOCK = 256


def attention_core(q, k, v, block: int = BLOCK) -> Tensor:
    """softmax(q k^T / sqrt(d) + causal mask) v over ``(..., T, d)`` inputs."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape != k.shape or q.shape[:-1] != v.shape[:-1]:
        raise ShapeError(f"q/k/v shapes {q.shape}, {k.shape}, {v.shape} disagree")
    Q, K, V = q.data, k.data, v.data
    T, d = Q.shape[-2:]
    scale = 1.0 / np.sqrt(d)
    out = np.empty(Q.shape[:-1] + (V.shape[-1],))
    lse = np.empty(Q.shape[:-1])

    def scores(s, e):
        sc = np.matmul(Q[..., s:e, :], np.swapaxes(K[..., :e, :], -1, -2)) * scale
        rows = np.arange(s, e)[:, None]
        cols = np.arange(e)[None, :]
        sc[..., cols > rows] = -np.inf
        return sc

    for s in range(0, T, block):
        e = min(T, s + block)
        sc = scores(s, e)
        m = sc.max(axis=-1, keepdims=True)
        p = np.exp(sc - m)
        z = p.sum(axis=-1, keepdims=True)
        out[..., s:e, :] = np.matmul(p, V[..., :e, :]) / z
        lse[..., s:e] = (m + np.log(z))[..., 0]

    def backward(g):
        dQ = np.zeros_like(Q)
        dK = np.zeros_like(K)
        dV = np.zeros_like(V)
        for s in range(0, T, block):
            e = min(T, s + block)
            p = np.exp(scores(s, e) - lse[..., s:e, None])
            gb = g[..., s:e, :]
            dV[..., :e, :] += np.matmul(np.swapaxes(p, -1, -2), gb)
            dp = np.matmul(gb, np.swapaxes(V[..., :e, :], -1, -2))
            row = (gb * out[..., s:e, :]).sum(-1, keepdims=True)
            ds = p * (dp - row) * scale
            dQ[..., s:e, :] = np.matmul(ds, K[..., :e, :])
            dK[..., :e, :] += np.matmul(np.swapaxes(ds, -1, -2), Q[..., s:e, :])
        return dQ, dK, dV

    return make_result("attention", out, (q, k, v), backward)


def causal_attention(weights: dict, u) -> Tensor:
    """Project to q/k/v, attend causally, project out: ``(... , T, W) -> (..., T, W)``."""
    u = as_tensor(u)
    if u.shape[-1] != weights["W_q"].shape[0]:
        raise ShapeError(f"input width {u.shape[-1]} does not match W_q {weights['W_q'].shape}")
    q = matmul(u, weights["W_q"])
    k = matmul(u, weights["W_k"])
    v = matmul(u, weights["W_v"])
    return matmul(attention_core(q, k, v), weights["W_o"]) + weights["b_o"]


def init_attention(width: int, rng: np.random.Generator) -> dict:
    s = 1.0 / np.sqrt(width)
    mats = {name: Tensor(rng.normal(0.0, s, (width, width)), requires_grad=True)
            for name in ("W_q", "W_k", "W_v", "W_o")}
    mats["b_o"] = Tensor(np.zeros(width), requires_grad=True)
    return mats


def sinusoidal_positions(T: int, width: int) -> np.ndarray:
    pos = np.arange(T)[:, None]
    i = np.arange(width)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / width)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
