"""Diagonal linear time-invariant state-space layer.

Complex quantities live in real tensors as trailing (re, im) pairs. Only
the fused kernels below touch ``complex128`` arrays, and only transiently.

Conventions: ``n`` is the number of stored states per channel; each one
stands for a conjugate pair, so outputs read ``2 * Re(C x)``. Gradients of
complex intermediates use ``g = dL/dRe + i dL/dIm``; for a holomorphic
``w = f(z)`` that gives ``g_z = conj(f'(z)) * g_w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ShapeError
from ..ndgrad import Tensor, as_tensor, causal_conv, make_result

TINY_A = 1e-12


@dataclass
class SsmParams:
    """Per-channel diagonal SSM parameters for ``H`` channels of ``n`` states."""

    A_log_re: Tensor  # (H, n); Re(A) = -exp(A_log_re) < 0
    A_im: Tensor      # (H, n)
    B: Tensor         # (H, n, 2)
    C: Tensor         # (H, n, 2)
    D: Tensor         # (H,)
    log_dt: Tensor    # (H,)

    NAMES = ("A_log_re", "A_im", "B", "C", "D", "log_dt")

    @classmethod
    def init(cls, channels: int, n: int, rng: np.random.Generator,
             dt_min: float = 1e-3, dt_max: float = 1e-1) -> "SsmParams":
        """S4D-Lin style: A_j = -1/2 + i*pi*j, B = 1, C ~ N(0, 1) complex."""
        A_log_re = np.full((channels, n), np.log(0.5))
        A_im = np.broadcast_to(np.pi * np.arange(n), (channels, n)).copy()
        B = np.zeros((channels, n, 2))
        B[..., 0] = 1.0
        C = rng.standard_normal((channels, n, 2)) * np.sqrt(0.5)
        D = rng.standard_normal(channels)
        log_dt = rng.uniform(np.log(dt_min), np.log(dt_max), channels)
        return cls(*(Tensor(a, requires_grad=True) for a in (A_log_re, A_im, B, C, D, log_dt)))

    @classmethod
    def from_complex(cls, A, B, C, D, dt) -> "SsmParams":
        """Build from complex arrays (test and oracle convenience)."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        if np.any(A.real >= 0):
            raise ValueError("Re(A) must be negative")
        B = np.broadcast_to(np.asarray(B, dtype=complex), A.shape)
        C = np.broadcast_to(np.asarray(C, dtype=complex), A.shape)
        H = A.shape[0]
        D = np.broadcast_to(np.asarray(D, dtype=float), (H,))
        dt = np.broadcast_to(np.asarray(dt, dtype=float), (H,))
        return cls(
            Tensor(np.log(-A.real)), Tensor(A.imag.copy()),
            Tensor(np.stack([B.real, B.imag], -1)), Tensor(np.stack([C.real, C.imag], -1)),
            Tensor(D.copy()), Tensor(np.log(dt)),
        )

    @classmethod
    def from_params(cls, params: dict, prefix: str) -> "SsmParams":
        return cls(*(params[f"{prefix}{name}"] for name in cls.NAMES))

    def to_params(self, prefix: str) -> dict:
        return {f"{prefix}{name}": getattr(self, name) for name in self.NAMES}

    def tensors(self) -> list[Tensor]:
        return [getattr(self, name) for name in self.NAMES]

    @property
    def channels(self) -> int:
        return self.A_log_re.shape[0]

    @property
    def n(self) -> int:
        return self.A_log_re.shape[1]

    @property
    def A(self) -> np.ndarray:
        return -np.exp(self.A_log_re.data) + 1j * self.A_im.data

    @property
    def dt(self) -> np.ndarray:
        return np.exp(self.log_dt.data)

    @property
    def Bc(self) -> np.ndarray:
        return self.B.data[..., 0] + 1j * self.B.data[..., 1]

    @property
    def Cc(self) -> np.ndarray:
        return self.C.data[..., 0] + 1j * self.C.data[..., 1]


class _Disc:
    """Zero-order-hold discretisation plus what its backward rule needs."""

    def __init__(self, p: SsmParams):
        self.p = p
        self.A = p.A
        self.dt = p.dt
        self.z = self.dt[:, None] * self.A
        self.E = np.exp(self.z)
        self.tiny = np.abs(self.A) < TINY_A
        A_safe = np.where(self.tiny, 1.0, self.A)
        self.A_safe = A_safe
        self.coef = np.where(self.tiny, self.dt[:, None], (self.E - 1.0) / A_safe)
        self.Bc = p.Bc
        self.Abar = self.E
        self.Bbar = self.coef * self.Bc

    def param_grads(self, g_z, g_Bbar, g_C, g_D) -> tuple:
        """Map complex grads of (z, B_bar, C) onto the real parameter tensors."""
        p = self.p
        g_B = np.conj(self.coef) * g_Bbar
        g_z = g_z + np.where(self.tiny, 0.0, np.conj(self.E / self.A_safe * self.Bc) * g_Bbar)
        g_A = np.where(self.tiny, 0.0,
                       np.conj(-(self.E - 1.0) / self.A_safe**2 * self.Bc) * g_Bbar)
        g_A = g_A + self.dt[:, None] * g_z
        g_dt = (g_z * np.conj(self.A)).real.sum(-1)
        g_dt = g_dt + np.where(self.tiny, (g_Bbar * np.conj(self.Bc)).real, 0.0).sum(-1)
        return (
            g_A.real * -np.exp(p.A_log_re.data),
            g_A.imag,
            np.stack([g_B.real, g_B.imag], -1),
            np.stack([g_C.real, g_C.imag], -1),
            g_D,
            g_dt * self.dt,
        )


def discretize(p: SsmParams) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order hold: A_bar = exp(dt A), B_bar = A^-1 (exp(dt A) - 1) B.

    Where ``|A| < 1e-12`` the analytic limit ``B_bar = dt B`` is used.
    """
    d = _Disc(p)
    return d.Abar, d.Bbar


def dssm_kernel(p: SsmParams, T: int) -> Tensor:
    """Impulse-response kernel ``K[h, t] = 2 Re(sum_n C A_bar^t B_bar)``, shape (H, T)."""
    if T < 1:
        raise ShapeError("kernel length must be >= 1")
    d = _Disc(p)
    C = p.Cc
    W = C * d.Bbar
    steps = np.arange(T)
    V = np.exp(d.z[:, :, None] * steps)  # (H, n, T)
    K = 2.0 * np.einsum("hn,hnt->ht", W, V).real

    def backward(gK):
        cv = np.conj(V)
        g_W = 2.0 * np.einsum("hnt,ht->hn", cv, gK)
        g_z = 2.0 * np.conj(W) * np.einsum("hnt,ht->hn", cv, gK * steps)
        g_C = np.conj(d.Bbar) * g_W
        g_Bbar = np.conj(C) * g_W
        return d.param_grads(g_z, g_Bbar, g_C, None)

    return make_result("dssm_kernel", K, p.tensors(), backward)


def dssm_convolutional(p: SsmParams, u) -> Tensor:
    """y = causal_conv(K, u) + D u, evaluated with FFTs padded to >= 2T."""
    u = as_tensor(u)
    _check_input(p, u)
    K = dssm_kernel(p, u.shape[-2])
    return causal_conv(u, K) + u * p.D


def dssm_recurrent(p: SsmParams, u) -> Tensor:
    """x_t = A_bar x_{t-1} + B_bar u_t;  y_t = 2 Re(C x_t) + D u_t, from x = 0."""
    u = as_tensor(u)
    _check_input(p, u)
    d = _Disc(p)
    Abar, Bbar, C, D = d.Abar, d.Bbar, p.Cc, p.D.data
    ud = u.data
    T, H = ud.shape[-2:]
    lead = ud.shape[:-2]
    x = np.zeros(lead + (H, p.n), dtype=complex)
    xs = np.empty(lead + (T, H, p.n), dtype=complex)
    y = np.empty(ud.shape)
    for t in range(T):
        ut = ud[..., t, :]
        x = Abar * x + Bbar * ut[..., None]
        xs[..., t, :, :] = x
        yt = 2.0 * (C * x).real.sum(-1) + D * ut
        if not np.all(np.isfinite(yt)):
            raise NumericalError("non-finite state in dssm recurrence", timestep=t)
        y[..., t, :] = yt

    def backward(g):
        lam = np.zeros(lead + (H, p.n), dtype=complex)
        lams = np.empty_like(xs)
        cA, cC = np.conj(Abar), np.conj(C)
        for t in range(T - 1, -1, -1):
            lam = 2.0 * g[..., t, :, None] * cC + cA * lam
            lams[..., t, :, :] = lam
        x_prev = np.zeros_like(xs)
        x_prev[..., 1:, :, :] = xs[..., :-1, :, :]
        red = tuple(range(len(lead) + 1))
        g_Abar = (np.conj(x_prev) * lams).sum(axis=red)
        g_Bbar = (ud[..., None] * lams).sum(axis=red)
        g_C = 2.0 * (g[..., None] * np.conj(xs)).sum(axis=red)
        g_D = (g * ud).sum(axis=red)
        g_u = D * g + (lams * np.conj(Bbar)).real.sum(-1)
        g_z = np.conj(Abar) * g_Abar
        return (g_u,) + d.param_grads(g_z, g_Bbar, g_C, g_D)

    return make_result("dssm_recurrent", y, (u, *p.tensors()), backward)


def _check_input(p: SsmParams, u: Tensor) -> None:
    if u.ndim < 2 or u.shape[-1] != p.channels:
        raise ShapeError(f"input {u.shape} does not end in {p.channels} channels")
