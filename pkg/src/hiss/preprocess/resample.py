"""Uniform-grid resampling of timestamped channel series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ExtrapolationError, LengthError, RateError

_EPS = 1e-9


@dataclass(frozen=True)
class RawChannelSeries:
    timestamps: np.ndarray  # (T,) seconds, strictly increasing
    values: np.ndarray      # (T, d)
    nominal_hz: float

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.shape[0]:
            raise LengthError(f"timestamps {t.shape} do not match values {v.shape}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("series contains NaN or Inf")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "values", v)


def grid(start: float, hz: float, n: int) -> np.ndarray:
    return start + np.arange(n) / hz


def resample(series: RawChannelSeries, target_hz: float, n: int | None = None,
             offset: float = 0.0) -> np.ndarray:
    """Linearly interpolate onto ``t0 + offset + i / target_hz``.

    With ``n`` omitted, the grid runs as far as the data covers. A grid
    point between samples reads the next sample too (one-sample lookahead).
    """
    if target_hz <= 0:
        raise RateError("target rate must be positive")
    t = series.timestamps
    if t.size < 2:
        raise LengthError("resampling needs at least 2 samples")
    start = t[0] + offset
    if offset < 0:
        raise ExtrapolationError("grid would start before the first sample")
    if n is None:
        n = int(math.floor((t[-1] - start) * target_hz + _EPS)) + 1
    g = grid(start, target_hz, n)
    if n < 1 or g[-1] > t[-1] + _EPS:
        raise ExtrapolationError(
            f"grid end {g[-1]:.6f}s extends beyond the last sample at {t[-1]:.6f}s")
    g = np.minimum(g, t[-1])
    return np.stack([np.interp(g, t, series.values[:, j]) for j in range(series.values.shape[1])],
                    axis=1)


def align_pair(sensor: RawChannelSeries, label: RawChannelSeries, sensor_hz: float = 50.0,
               output_hz: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Resample a sensor/label pair onto phase-locked grids.

    Output tick ``i`` sits at the time of sensor sample ``(i+1)*stride - 1``
    so each tick closes a window of ``stride`` sensor samples, and the
    sensor length is exactly ``stride`` times the label length.
    """
    ratio = sensor_hz / output_hz
    stride = round(ratio)
    if not math.isclose(ratio, stride, abs_tol=1e-9):
        raise RateError(f"{sensor_hz} Hz is not a multiple of {output_hz} Hz")
    t0 = max(sensor.timestamps[0], label.timestamps[0])
    t1 = min(sensor.timestamps[-1], label.timestamps[-1])
    n_out = int(math.floor(((t1 - t0) * sensor_hz + 1 + _EPS) / stride))
    if n_out < 1:
        raise ExtrapolationError("sensor and label streams overlap by less than one output tick")
    s = resample(sensor, sensor_hz, n=n_out * stride, offset=t0 - sensor.timestamps[0])
    y = resample(label, output_hz, n=n_out,
                 offset=t0 - label.timestamps[0] + (stride - 1) / sensor_hz)
    return s, y
