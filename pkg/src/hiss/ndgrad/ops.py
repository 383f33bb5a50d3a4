"""Differentiable primitive operations over :class:`Tensor`."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from ..errors import DomainError, ShapeError
from .core import Tensor, as_tensor, make_result


def _silu_grad(x, y, g):
    s = expit(x)
    return g * (s * (1.0 + x * (1.0 - s)))


# tag -> (forward, backward(x, y, g))
UNARY = {
    "exp": (np.exp, lambda x, y, g: g * y),
    "log": (np.log, lambda x, y, g: g / x),
    "tanh": (np.tanh, lambda x, y, g: g * (1.0 - y * y)),
    "sigmoid": (expit, lambda x, y, g: g * y * (1.0 - y)),
    "silu": (lambda x: x * expit(x), _silu_grad),
    "softplus": (lambda x: np.logaddexp(0.0, x), lambda x, y, g: g * expit(x)),
    "neg": (np.negative, lambda x, y, g: -g),
}

BINARY = {
    "add": (np.add, lambda a, b, g: (g, g)),
    "sub": (np.subtract, lambda a, b, g: (g, -g)),
    "mul": (np.multiply, lambda a, b, g: (g * b, g * a)),
    "div": (np.divide, lambda a, b, g: (g / b, -g * a / (b * b))),
}

ELEMENTWISE_TAGS = tuple(UNARY) + tuple(BINARY)


def elementwise(tag: str, a, b=None) -> Tensor:
    """Apply a registered elementwise operation with broadcasting."""
    a = as_tensor(a)
    if tag in UNARY:
        if b is not None:
            raise ShapeError(f"'{tag}' takes one operand")
        fwd, bwd = UNARY[tag]
        x = a.data
        if tag == "log" and np.any(x <= 0):
            raise DomainError("log of a non-positive value")
        with np.errstate(over="ignore"):
            y = fwd(x)
        return make_result(tag, y, (a,), lambda g: (bwd(x, y, g),))
    if tag in BINARY:
        if b is None:
            raise ShapeError(f"'{tag}' takes two operands")
        b = as_tensor(b)
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError as exc:
            raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc
        if tag == "div" and np.any(b.data == 0):
            raise DomainError("division by zero")
        fwd, bwd = BINARY[tag]
        x, z = a.data, b.data
        with np.errstate(over="ignore"):
            y = fwd(x, z)
        return make_result(tag, y, (a, b), lambda g: bwd(x, z, g))
    raise ValueError(f"unknown elementwise tag '{tag}'")


def add(a, b): return elementwise("add", a, b)
def sub(a, b): return elementwise("sub", a, b)
def mul(a, b): return elementwise("mul", a, b)
def div(a, b): return elementwise("div", a, b)
def exp(a): return elementwise("exp", a)
def log(a): return elementwise("log", a)
def tanh(a): return elementwise("tanh", a)
def sigmoid(a): return elementwise("sigmoid", a)
def silu(a): return elementwise("silu", a)
def softplus(a): return elementwise("softplus", a)
def neg(a): return elementwise("neg", a)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    x, z = a.data, b.data
    y = np.matmul(x, z)

    def backward(g):
        return np.matmul(g, np.swapaxes(z, -1, -2)), np.matmul(np.swapaxes(x, -1, -2), g)

    return make_result("matmul", y, (a, b), backward)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    y = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_result("sum", np.asarray(y), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        y = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return make_result("reshape", y, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_result("transpose", np.transpose(a.data, axes), (a,),
                       lambda g: (np.transpose(g, inv),))


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis or i is None
               for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    basic = _is_basic(index)

    def backward(g):
        out = np.zeros(shape)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return make_result("getitem", np.asarray(a.data[index]), (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result("concat", y, ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):])
                for t in ts]
    return concat(expanded, axis=axis)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError("layer_norm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, g * xhat, g

    return make_result("layer_norm", y, (x, gain, bias), backward)


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity at evaluation time or with rate 0."""
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)
