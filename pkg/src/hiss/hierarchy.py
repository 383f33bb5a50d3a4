"""Two-level chunked composition of sequence stacks.

A sensor sequence at ``sensor_hz`` is cut into windows of ``k`` samples,
one per output tick. Windows end exactly on the tick (``stride`` samples
apart) and are zero-padded on the left where they would start before the
sequence. A shared low-level stack runs on every window from a zero state,
its output at the last row becomes the chunk feature, and a high-level
stack maps the feature sequence to the output sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError, RateError
from .layers import LayerStackSpec, init_stack, parameter_count, stack_forward
from .ndgrad import Tensor, as_tensor, concat, getitem, reshape


@dataclass(frozen=True)
class ChunkPlan:
    k: int
    stride: int
    pad: str = "zero"

    def __post_init__(self):
        if self.k < 1 or self.stride < 1:
            raise ConfigError("chunk size and stride must be >= 1")
        if self.pad != "zero":
            raise ConfigError(f"unsupported padding policy '{self.pad}'")

    @property
    def overlap(self) -> int:
        """Samples shared by consecutive windows (negative means gaps)."""
        return self.k - self.stride

    def n_chunks(self, T: int) -> int:
        return T // self.stride

    def window(self, i: int) -> tuple[int, int]:
        """Half-open sensor index range of window ``i`` before clipping at 0."""
        end = (i + 1) * self.stride
        return end - self.k, end

    def indices(self, T: int) -> np.ndarray:
        """(n_chunks, k) sensor indices; -1 marks zero padding."""
        starts = np.arange(1, self.n_chunks(T) + 1) * self.stride - self.k
        idx = starts[:, None] + np.arange(self.k)[None, :]
        return np.where(idx < 0, -1, idx)


def make_plan(sensor_hz: float, output_hz: float, k: int) -> ChunkPlan:
    """Stride fixed to the rate ratio; ``k`` free (overlap iff k > stride)."""
    if sensor_hz <= 0 or output_hz <= 0:
        raise RateError("rates must be positive")
    ratio = sensor_hz / output_hz
    stride = round(ratio)
    if stride < 1 or not math.isclose(ratio, stride, rel_tol=0, abs_tol=1e-9):
        raise RateError(f"sensor rate {sensor_hz} is not a multiple of output rate {output_hz}")
    return ChunkPlan(k=int(k), stride=int(stride))


def _check_aligned(T: int, plan: ChunkPlan) -> None:
    if T % plan.stride:
        raise AlignmentError(f"sequence length {T} is not divisible by stride {plan.stride}")


def chunk(u, plan: ChunkPlan) -> Tensor:
    """(..., T, d) -> (..., T/stride, k, d) windows ending on each output tick."""
    u = as_tensor(u)
    T = u.shape[-2]
    _check_aligned(T, plan)
    pad = max(0, plan.k - plan.stride)
    if pad:
        zeros = Tensor(np.zeros(u.shape[:-2] + (pad, u.shape[-1])))
        u = concat([zeros, u], axis=-2)
    idx = plan.indices(T)
    idx = np.where(idx < 0, -1, idx) + pad  # padded rows map into the zero block
    return getitem(u, (Ellipsis, idx, slice(None)))


def downsample(u, plan: ChunkPlan) -> Tensor:
    """Sensor samples at the output ticks (the chunk-size-1 view)."""
    u = as_tensor(u)
    _check_aligned(u.shape[-2], plan)
    return getitem(u, (Ellipsis, slice(plan.stride - 1, None, plan.stride), slice(None)))


@dataclass(frozen=True)
class HissSpec:
    low: LayerStackSpec | None  # None: identity low level (chunk's last sample)
    high: LayerStackSpec
    plan: ChunkPlan

    def __post_init__(self):
        if self.low is not None and self.low.d_out != self.high.d_in:
            raise ConfigError(
                f"low-level output dim {self.low.d_out} != high-level input dim {self.high.d_in}")

    @property
    def feature_dim(self) -> int:
        return self.high.d_in


def hiss_forward(spec: HissSpec, params: dict, u, *, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """(B, T, d) sensor batch -> (B, T/stride, d_out) predictions."""
    u = as_tensor(u)
    chunks = chunk(u, spec.plan)
    lead = chunks.shape[:-2]
    k, d = chunks.shape[-2:]
    if spec.low is None:
        feats = getitem(chunks, (Ellipsis, -1, slice(None)))
    else:
        flat = reshape(chunks, (-1, k, d))
        low = stack_forward(spec.low, params, flat, prefix="low.", training=training, rng=rng)
        feats = reshape(getitem(low, (slice(None), -1, slice(None))), lead + (spec.low.d_out,))
    return stack_forward(spec.high, params, feats, prefix="high.", training=training, rng=rng)


def flat_forward(spec: LayerStackSpec, params: dict, u, plan: ChunkPlan, *, prefix: str = "",
                 training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Run ``spec`` at the full sensor rate and read outputs at the output ticks."""
    u = as_tensor(u)
    _check_aligned(u.shape[-2], plan)
    y = stack_forward(spec, params, u, prefix=prefix, training=training, rng=rng)
    return getitem(y, (Ellipsis, slice(plan.stride - 1, None, plan.stride), slice(None)))


@dataclass(frozen=True)
class ModelSpec:
    """A flat model or a HiSS model, with the stride it predicts at."""

    kind: str
    stride: int
    stack: LayerStackSpec | None = None
    low: LayerStackSpec | None = None
    high: LayerStackSpec | None = None
    k: int | None = None

    def __post_init__(self):
        if self.kind == "flat":
            if self.stack is None:
                raise ConfigError("flat model needs 'stack'")
        elif self.kind == "hiss":
            if self.high is None or self.k is None:
                raise ConfigError("hiss model needs 'high' and 'k'")
            self.hiss  # validates dims
        else:
            raise ConfigError(f"unknown model kind '{self.kind}'")

    @property
    def plan(self) -> ChunkPlan:
        return ChunkPlan(k=self.k if self.kind == "hiss" else 1, stride=self.stride)

    @property
    def hiss(self) -> HissSpec:
        return HissSpec(self.low, self.high, self.plan)

    def init(self, rng: np.random.Generator) -> dict[str, Tensor]:
        if self.kind == "flat":
            return init_stack(self.stack, rng)
        params = {} if self.low is None else init_stack(self.low, rng, prefix="low.")
        params.update(init_stack(self.high, rng, prefix="high."))
        return params

    def forward(self, params: dict, u, *, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        if self.kind == "flat":
            return flat_forward(self.stack, params, u, self.plan, training=training, rng=rng)
        return hiss_forward(self.hiss, params, u, training=training, rng=rng)

    def n_params(self) -> int:
        if self.kind == "flat":
            return parameter_count(self.stack)
        low = 0 if self.low is None else parameter_count(self.low)
        return low + parameter_count(self.high)

    @property
    def d_in(self) -> int:
        if self.kind == "flat":
            return self.stack.d_in
        return self.high.d_in if self.low is None else self.low.d_in

    @property
    def d_out(self) -> int:
        return (self.stack if self.kind == "flat" else self.high).d_out

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "stride": self.stride}
        if self.kind == "flat":
            out["stack"] = self.stack.to_dict()
        else:
            out["low"] = None if self.low is None else self.low.to_dict()
            out["high"] = self.high.to_dict()
            out["k"] = self.k
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        allowed = {"kind", "stride", "stack", "low", "high", "k"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        for key in ("stack", "low", "high"):
            if d.get(key) is not None:
                d[key] = LayerStackSpec.from_dict(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad model spec: {exc}") from exc


COST_MODES = ("flat-ssm", "hiss-ssm", "flat-attn", "hiss-attn-over-ssm")


def cost_model(T: int, k: int, mode: str, stride: int | None = None) -> float:
    """Leading-order operation count for a length-``T`` sequence.

    ``stride`` defaults to ``k`` (non-overlapping chunks); ``stride=1`` is
    the maximal (k-1)-overlap case. HiSS costs are the low level's
    ``(T/stride) * k`` plus the high level's work on ``T/stride`` features.
    """
    if T < 1 or k < 1:
        raise ValueError("T and k must be >= 1")
    stride = k if stride is None else stride
    chunks = T / stride
    if mode == "flat-ssm":
        return float(T)
    if mode == "hiss-ssm":
        return chunks * k + chunks
    if mode == "flat-attn":
        return float(T) ** 2
    if mode == "hiss-attn-over-ssm":
        return chunks * k + chunks ** 2
    raise ValueError(f"unknown cost mode '{mode}' (expected one of {COST_MODES})")
