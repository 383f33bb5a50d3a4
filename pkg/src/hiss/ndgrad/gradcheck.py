"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, backward, no_grad


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Coordinate-wise central differences of scalar ``fn()`` w.r.t. ``t``."""
    out = np.empty(t.shape)
    flat = t.data.reshape(-1)
    res = out.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = fn().item()
            flat[i] = orig - eps
            fm = fn().item()
            flat[i] = orig
            res[i] = (fp - fm) / (2 * eps)
    return out


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
              directions: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Worst relative error between analytic and numeric gradients.

    Per tensor, the error is ``max|analytic - numeric|`` divided by the
    larger of the two gradients' max-abs (floored at 1e-8). With
    ``directions`` set, random unit directions over all parameters replace
    the coordinate sweep, and the error compares directional derivatives.
    """
    for p in params:
        p.grad = None
        p.requires_grad = True
    backward(fn())
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    if directions is None:
        worst = 0.0
        for p, a in zip(params, analytic):
            n = numeric_grad(fn, p, eps)
            scale = max(np.abs(n).max(initial=0.0), np.abs(a).max(initial=0.0), 1e-8)
            worst = max(worst, float(np.abs(a - n).max(initial=0.0) / scale))
        return worst

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    with no_grad():
        for _ in range(directions):
            vs = [rng.standard_normal(p.shape) for p in params]
            norm = np.sqrt(sum(float((v * v).sum()) for v in vs))
            vs = [v / norm for v in vs]
            origs = [p.data.copy() for p in params]
            for p, o, v in zip(params, origs, vs):
                p.data[...] = o + eps * v
            fp = fn().item()
            for p, o, v in zip(params, origs, vs):
                p.data[...] = o - eps * v
            fm = fn().item()
            for p, o in zip(params, origs):
                p.data[...] = o
            num = (fp - fm) / (2 * eps)
            ana = sum(float((a * v).sum()) for a, v in zip(analytic, vs))
            scale = max(abs(num), abs(ana), 1e-8)
            worst = max(worst, abs(num - ana) / scale)
    return worst
