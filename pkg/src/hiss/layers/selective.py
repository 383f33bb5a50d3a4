"""Selective (input-dependent) diagonal state-space scan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ShapeError
from ..ndgrad import Tensor, as_tensor, make_result, matmul, softplus
from .scan import associative_scan, sequential_scan


@dataclass
class SelectiveParams:
    """Projections producing per-step (dt, B, C) plus shared diagonal A and D."""

    W_dt: Tensor      # (H, H)
    b_dt: Tensor      # (H,)
    W_B: Tensor       # (H, n)
    W_C: Tensor       # (H, n)
    A_log_re: Tensor  # (H, n)
    A_im: Tensor      # (H, n)
    D: Tensor         # (H,)

    NAMES = ("W_dt", "b_dt", "W_B", "W_C", "A_log_re", "A_im", "D")

    @classmethod
    def init(cls, channels: int, n: int, rng: np.random.Generator,
             dt_min: float = 1e-3, dt_max: float = 1e-1) -> "SelectiveParams":
        scale = 1.0 / np.sqrt(channels)
        dt0 = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), channels))
        arrays = (
            rng.standard_normal((channels, channels)) * scale * 0.1,
            np.log(np.expm1(dt0)),  # softplus^-1
            rng.standard_normal((channels, n)) * scale,
            rng.standard_normal((channels, n)) * scale,
            np.full((channels, n), np.log(0.5)),
            np.broadcast_to(np.pi * np.arange(n), (channels, n)).copy(),
            np.ones(channels),
        )
        return cls(*(Tensor(a, requires_grad=True) for a in arrays))

    @classmethod
    def from_params(cls, params: dict, prefix: str) -> "SelectiveParams":
        return cls(*(params[f"{prefix}{name}"] for name in cls.NAMES))

    def to_params(self, prefix: str) -> dict:
        return {f"{prefix}{name}": getattr(self, name) for name in self.NAMES}

    @property
    def channels(self) -> int:
        return self.D.shape[0]


def selective_core(u, delta, Bm, Cm, A_log_re, A_im, D, mode: str = "scan") -> Tensor:
    """Input-dependent recurrence over ``(..., T, H)`` inputs.

    A_bar_t = exp(delta_t A), B_bar_t = delta_t B_t (Euler input step),
    x_t = A_bar_t x_{t-1} + B_bar_t u_t, y_t = Re(C_t x_t) + D u_t.
    ``mode`` picks the Blelloch scan ("scan") or the plain loop ("loop").
    """
    u, delta, Bm, Cm = (as_tensor(t) for t in (u, delta, Bm, Cm))
    A_log_re, A_im, D = (as_tensor(t) for t in (A_log_re, A_im, D))
    if delta.shape != u.shape or Bm.shape[:-1] != u.shape[:-1] or Cm.shape != Bm.shape:
        raise ShapeError("selective_core input shapes disagree")
    scan = {"scan": associative_scan, "loop": sequential_scan}[mode]

    ud, dd, Bd, Cd = u.data, delta.data, Bm.data, Cm.data
    A = -np.exp(A_log_re.data) + 1j * A_im.data
    with np.errstate(over="ignore", invalid="ignore"):
        Abar = np.exp(dd[..., None] * A)
        b = (dd * ud)[..., None] * Bd[..., None, :]
        xs = scan(Abar, b, axis=-3)
    xr = xs.real
    y = np.einsum("...tn,...thn->...th", Cd, xr) + D.data * ud
    bad = ~np.isfinite(y)
    if bad.any():
        t = int(np.argwhere(bad)[0][-2])
        raise NumericalError("non-finite state in selective scan", timestep=t)

    def backward(g):
        gx = g[..., None] * Cd[..., None, :]
        a_next = np.zeros_like(Abar)
        a_next[..., :-1, :, :] = np.conj(Abar[..., 1:, :, :])
        lam = scan(a_next, gx, axis=-3, reverse=True)
        x_prev = np.zeros_like(xs)
        x_prev[..., 1:, :, :] = xs[..., :-1, :, :]
        g_z = np.conj(Abar) * np.conj(x_prev) * lam
        g_b = lam.real
        gbB = (g_b * Bd[..., None, :]).sum(-1)
        g_delta = (g_z * np.conj(A)).real.sum(-1) + gbB * ud
        g_u = gbB * dd + D.data * g
        g_Bm = (g_b * (dd * ud)[..., None]).sum(-2)
        g_Cm = np.einsum("...th,...thn->...tn", g, xr)
        red = tuple(range(ud.ndim - 1))
        g_A = (g_z * dd[..., None]).sum(axis=red)
        g_D = (g * ud).sum(axis=red)
        return (g_u, g_delta, g_Bm, g_Cm,
                g_A.real * -np.exp(A_log_re.data), g_A.imag, g_D)

    return make_result("selective_scan", y, (u, delta, Bm, Cm, A_log_re, A_im, D), backward)


def selective_scan(p: SelectiveParams, u, mode: str = "scan") -> Tensor:
    """Project (dt, B, C) from ``u`` and run the selective recurrence."""
    u = as_tensor(u)
    if u.ndim < 2 or u.shape[-1] != p.channels:
        raise ShapeError(f"input {u.shape} does not end in {p.channels} channels")
    delta = softplus(matmul(u, p.W_dt) + p.b_dt)
    Bm = matmul(u, p.W_B)
    Cm = matmul(u, p.W_C)
    return selective_core(u, delta, Bm, Cm, p.A_log_re, p.A_im, p.D, mode=mode)
