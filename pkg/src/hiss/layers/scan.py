"""Prefix evaluation of the first-order linear recurrence x_t = a_t x_{t-1} + b_t.

Elements compose as ``(a, b) o (a', b') = (a a', a b' + b)`` where
``(a', b')`` is the earlier element. The composition is associative, so the
recurrence admits a work-efficient Blelloch scan: an up-sweep building
subtree aggregates and a down-sweep distributing exclusive prefixes, each
over ceil(log2 T) levels. Every level is one vectorised numpy update.
"""

from __future__ import annotations

import numpy as np


def compose(later, earlier):
    """Apply ``earlier`` first, then ``later``."""
    a, b = later
    a2, b2 = earlier
    return a * a2, a * b2 + b


def sequential_scan(a, b, axis: int = 0, reverse: bool = False) -> np.ndarray:
    """Reference loop: x_t = a_t x_{t-1} + b_t with x_{-1} = 0."""
    a = np.moveaxis(np.asarray(a), axis, 0)
    b = np.moveaxis(np.asarray(b), axis, 0)
    if reverse:
        a, b = a[::-1], b[::-1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    x = np.zeros(out.shape[1:], dtype=out.dtype)
    for t in range(out.shape[0]):
        x = a[t] * x + b[t]
        out[t] = x
    if reverse:
        out = out[::-1]
    return np.moveaxis(out, 0, axis)


def associative_scan(a, b, axis: int = 0, reverse: bool = False) -> np.ndarray:
    """Blelloch scan of the linear recurrence along ``axis``.

    ``reverse=True`` runs the recurrence from the last element backwards,
    which is what adjoint (backward-pass) recurrences need.
    """
    a = np.moveaxis(np.asarray(a), axis, 0)
    b = np.moveaxis(np.asarray(b), axis, 0)
    shape = np.broadcast_shapes(a.shape, b.shape)
    dtype = np.result_type(a, b)
    T = shape[0]
    if T == 0:
        return np.moveaxis(np.empty(shape, dtype=dtype), 0, axis)
    if reverse:
        a, b = a[::-1], b[::-1]

    P = 1 << (T - 1).bit_length()
    A = np.ones((P,) + shape[1:], dtype=dtype)
    Bv = np.zeros((P,) + shape[1:], dtype=dtype)
    A[:T] = a
    Bv[:T] = b

    d = 1
    while d < P:
        right = slice(2 * d - 1, P, 2 * d)
        left = slice(d - 1, P, 2 * d)
        Bv[right] = A[right] * Bv[left] + Bv[right]
        A[right] = A[right] * A[left]
        d *= 2

    A[P - 1] = 1
    Bv[P - 1] = 0
    d = P // 2
    while d >= 1:
        right = slice(2 * d - 1, P, 2 * d)
        left = slice(d - 1, P, 2 * d)
        la, lb = A[left].copy(), Bv[left].copy()
        A[left] = A[right]
        Bv[left] = Bv[right]
        Bv[right] = la * Bv[right] + lb
        A[right] = la * A[right]
        d //= 2

    out = a * Bv[:T] + b
    if reverse:
        out = out[::-1]
    return np.moveaxis(np.ascontiguousarray(out), 0, axis)
