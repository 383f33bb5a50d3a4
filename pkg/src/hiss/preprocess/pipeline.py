"""Drift subtraction, difference augmentation, normalization, and their composition."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..errors import ConfigError, LengthError
from .filters import FilterSpec, butterworth_lowpass, design_butterworth

RESTING_WARMUP = 25


def subtract_resting(series, warmup: int = RESTING_WARMUP) -> np.ndarray:
    """Remove the per-dimension mean of the first ``warmup`` samples.

    Rows before ``warmup`` see the whole calibration window, so the op is
    causal only from row ``warmup - 1`` on.
    """
    x = np.asarray(series, dtype=float)
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    if x.shape[0] < warmup:
        raise LengthError(f"series of length {x.shape[0]} is shorter than warmup {warmup}")
    return x - x[:warmup].mean(axis=0)


def append_diffs(series) -> np.ndarray:
    """(T, d) -> (T, 2d): each row followed by its one-step difference (zero at t=0)."""
    x = np.asarray(series, dtype=float)
    d = np.zeros_like(x)
    d[1:] = x[1:] - x[:-1]
    return np.concatenate([x, d], axis=-1)


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]
    constant: tuple[int, ...] = ()  # dims whose std was zero; centered but not scaled

    @property
    def dim(self) -> int:
        return len(self.mean)

    def _arrays(self):
        scale = np.array(self.std, dtype=float)
        scale[list(self.constant)] = 1.0
        return np.array(self.mean, dtype=float), scale

    def to_dict(self) -> dict:
        return {"mean": list(self.mean), "std": list(self.std), "constant": list(self.constant)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(tuple(float(v) for v in d["mean"]), tuple(float(v) for v in d["std"]),
                   tuple(int(v) for v in d.get("constant", ())))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "NormStats":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_stats(arrays: Iterable[np.ndarray], tol: float = 1e-12) -> NormStats:
    """Population mean/std over every row of every array (training split only)."""
    rows = np.concatenate([np.asarray(a, dtype=float).reshape(-1, np.shape(a)[-1]) for a in arrays])
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    constant = tuple(int(j) for j in np.flatnonzero(std <= tol * np.maximum(1.0, np.abs(mean))))
    if constant:
        warnings.warn(f"constant dimensions {list(constant)} are centered but not scaled",
                      RuntimeWarning, stacklevel=2)
    return NormStats(tuple(mean.tolist()), tuple(std.tolist()), constant)


def normalize(series, stats: NormStats) -> np.ndarray:
    mean, scale = stats._arrays()
    return (np.asarray(series, dtype=float) - mean) / scale


def denormalize(series, stats: NormStats) -> np.ndarray:
    mean, scale = stats._arrays()
    return np.asarray(series, dtype=float) * scale + mean


@dataclass(frozen=True)
class PreprocessConfig:
    """Switches for the sensor pipeline: resting -> low-pass -> diffs.

    Normalization is fitted separately on the training split.
    """

    resting_warmup: int | None = RESTING_WARMUP
    diffs: bool = True
    filter: dict | None = field(default=None)  # {"order": int, "cutoff_hz": float}

    def __post_init__(self):
        if self.filter is not None:
            unknown = set(self.filter) - {"order", "cutoff_hz"}
            if unknown or "cutoff_hz" not in self.filter:
                raise ConfigError(f"filter needs 'cutoff_hz' (and optionally 'order'), got {self.filter}")

    def filter_spec(self, fs: float) -> FilterSpec | None:
        if self.filter is None:
            return None
        return design_butterworth(int(self.filter.get("order", 5)), float(self.filter["cutoff_hz"]), fs)

    def out_dim(self, d: int) -> int:
        return 2 * d if self.diffs else d

    def to_dict(self) -> dict:
        return {"resting_warmup": self.resting_warmup, "diffs": self.diffs, "filter": self.filter}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        unknown = set(d) - {"resting_warmup", "diffs", "filter"}
        if unknown:
            raise ConfigError(f"unknown preprocessing keys: {sorted(unknown)}")
        return cls(**d)


def preprocess_sensor(sensor, cfg: PreprocessConfig, fs: float) -> np.ndarray:
    x = np.asarray(sensor, dtype=float)
    if cfg.resting_warmup:
        x = subtract_resting(x, cfg.resting_warmup)
    spec = cfg.filter_spec(fs)
    if spec is not None:
        x = butterworth_lowpass(x, spec)
    if cfg.diffs:
        x = append_diffs(x)
    return x
