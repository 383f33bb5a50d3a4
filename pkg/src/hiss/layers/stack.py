"""Flat sequence-model stacks: embed -> depth x (layer, residual, norm, dropout) -> head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from ..ndgrad import Tensor, as_tensor, dropout, layer_norm, matmul, silu
from .attention import causal_attention, init_attention, sinusoidal_positions
from .lstm import init_lstm, lstm_forward
from .selective import SelectiveParams, selective_scan
from .ssm import SsmParams, dssm_convolutional, dssm_recurrent

KINDS = ("dssm", "selective", "lstm", "attention")
SSM_MODES = {"dssm": ("conv", "recurrent"), "selective": ("scan", "loop")}


@dataclass(frozen=True)
class LayerStackSpec:
    kind: str
    depth: int
    width: int
    d_in: int
    d_out: int
    dropout: float = 0.0
    state_dim: int = 16
    mode: str | None = None  # evaluation path for SSM kinds

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind '{self.kind}' (expected one of {KINDS})")
        if self.depth < 1 or self.width < 1 or self.d_in < 1 or self.d_out < 1:
            raise ConfigError("depth, width and projection sizes must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.state_dim < 1:
            raise ConfigError("state_dim must be >= 1")
        if self.mode is not None and self.mode not in SSM_MODES.get(self.kind, ()):
            raise ConfigError(f"mode '{self.mode}' is not valid for kind '{self.kind}'")

    @property
    def path(self) -> str | None:
        if self.kind in SSM_MODES:
            return self.mode or SSM_MODES[self.kind][0]
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LayerStackSpec":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad layer stack spec: {exc}") from exc


def _linear(d_in: int, d_out: int, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    s = 1.0 / np.sqrt(d_in)
    return (Tensor(rng.uniform(-s, s, (d_in, d_out)), requires_grad=True),
            Tensor(np.zeros(d_out), requires_grad=True))


def init_stack(spec: LayerStackSpec, rng: np.random.Generator, prefix: str = "") -> dict[str, Tensor]:
    """Fresh named parameters for ``spec``; names are prefixed with ``prefix``."""
    W = spec.width
    params: dict[str, Tensor] = {}
    params["embed.W"], params["embed.b"] = _linear(spec.d_in, W, rng)
    for i in range(spec.depth):
        lp = f"layers.{i}."
        if spec.kind == "dssm":
            params.update(SsmParams.init(W, spec.state_dim, rng).to_params(lp + "ssm."))
            params[lp + "out.W"], params[lp + "out.b"] = _linear(W, W, rng)
        elif spec.kind == "selective":
            params.update(SelectiveParams.init(W, spec.state_dim, rng).to_params(lp + "ssm."))
            params[lp + "gate.W"], params[lp + "gate.b"] = _linear(W, W, rng)
            params[lp + "out.W"], params[lp + "out.b"] = _linear(W, W, rng)
        elif spec.kind == "lstm":
            params.update({lp + "lstm." + k: v for k, v in init_lstm(W, W, rng).items()})
        else:
            params.update({lp + "attn." + k: v for k, v in init_attention(W, rng).items()})
            params[lp + "ffn.W1"], params[lp + "ffn.b1"] = _linear(W, 2 * W, rng)
            params[lp + "ffn.W2"], params[lp + "ffn.b2"] = _linear(2 * W, W, rng)
            params[lp + "norm2.g"] = Tensor(np.ones(W), requires_grad=True)
            params[lp + "norm2.b"] = Tensor(np.zeros(W), requires_grad=True)
        params[lp + "norm.g"] = Tensor(np.ones(W), requires_grad=True)
        params[lp + "norm.b"] = Tensor(np.zeros(W), requires_grad=True)
    params["head.W"], params["head.b"] = _linear(W, spec.d_out, rng)
    return {prefix + k: v for k, v in params.items()}


def parameter_count(spec: LayerStackSpec) -> int:
    """Closed-form count of scalar parameters in a stack."""
    W, n = spec.width, spec.state_dim
    per_layer = {
        "dssm": 6 * W * n + 2 * W + W * W + W,
        "selective": W * W + W + 4 * W * n + W + 2 * (W * W + W),
        "lstm": 2 * (W * 4 * W) + 4 * W,
        "attention": 4 * W * W + W + (2 * W * W + 2 * W) + (2 * W * W + W) + 2 * W,
    }[spec.kind] + 2 * W
    return spec.d_in * W + W + spec.depth * per_layer + W * spec.d_out + spec.d_out


def apply_layer(spec: LayerStackSpec, params: dict, lp: str, h: Tensor) -> Tensor:
    """One sequence layer (no residual / norm) at parameter prefix ``lp``."""
    if spec.kind == "dssm":
        ssm = SsmParams.from_params(params, lp + "ssm.")
        y = dssm_recurrent(ssm, h) if spec.path == "recurrent" else dssm_convolutional(ssm, h)
        return matmul(silu(y), params[lp + "out.W"]) + params[lp + "out.b"]
    if spec.kind == "selective":
        sel = SelectiveParams.from_params(params, lp + "ssm.")
        y = selective_scan(sel, h, mode=spec.path)
        gate = silu(matmul(h, params[lp + "gate.W"]) + params[lp + "gate.b"])
        return matmul(y * gate, params[lp + "out.W"]) + params[lp + "out.b"]
    if spec.kind == "lstm":
        return lstm_forward({k: params[lp + "lstm." + k] for k in ("W_ih", "W_hh", "b")}, h)
    weights = {k: params[lp + "attn." + k] for k in ("W_q", "W_k", "W_v", "W_o", "b_o")}
    return causal_attention(weights, h)


def stack_forward(spec: LayerStackSpec, params: dict, u, *, prefix: str = "",
                  training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Map ``(..., T, d_in)`` to ``(..., T, d_out)``; every position is causal."""
    u = as_tensor(u)
    if u.shape[-1] != spec.d_in:
        raise ShapeError(f"input width {u.shape[-1]} does not match d_in={spec.d_in}")
    p = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    h = matmul(u, p["embed.W"]) + p["embed.b"]
    if spec.kind == "attention":
        h = h + Tensor(sinusoidal_positions(u.shape[-2], spec.width))
    for i in range(spec.depth):
        lp = f"layers.{i}."
        y = apply_layer(spec, p, lp, h)
        h = layer_norm(h + dropout(y, spec.dropout, rng, training), p[lp + "norm.g"], p[lp + "norm.b"])
        if spec.kind == "attention":
            f = matmul(silu(matmul(h, p[lp + "ffn.W1"]) + p[lp + "ffn.b1"]), p[lp + "ffn.W2"]) + p[lp + "ffn.b2"]
            h = layer_norm(h + dropout(f, spec.dropout, rng, training), p[lp + "norm2.g"], p[lp + "norm2.b"])
    return matmul(h, p["head.W"]) + p["head.b"]
