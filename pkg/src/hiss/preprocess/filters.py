"""Low-pass Butterworth design by bilinear transform, applied causally."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from ..errors import FilterError


@dataclass(frozen=True)
class FilterSpec:
    order: int
    cutoff_hz: float
    fs: float
    kind: str = "butterworth-lowpass"
    b: np.ndarray = field(repr=False, default=None)  # numerator of H(z), descending z^-1 powers
    a: np.ndarray = field(repr=False, default=None)
    zeros: np.ndarray = field(repr=False, default=None)
    poles: np.ndarray = field(repr=False, default=None)
    gain: float = 1.0

    def to_dict(self) -> dict:
        return {"order": self.order, "cutoff_hz": self.cutoff_hz}


def design_butterworth(order: int, cutoff_hz: float, fs: float) -> FilterSpec:
    """Digital low-pass Butterworth with the analog cutoff pre-warped.

    Analog poles sit on a circle of radius ``2 fs tan(pi fc / fs)``; the
    bilinear map sends them inside the unit circle and all zeros to z = -1.
    The gain is set so H(1) = 1.
    """
    if order < 1:
        raise FilterError("filter order must be >= 1")
    nyquist = fs / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise FilterError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    warped = 2.0 * fs * np.tan(np.pi * cutoff_hz / fs)
    k = np.arange(1, order + 1)
    analog = warped * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    poles = (2.0 * fs + analog) / (2.0 * fs - analog)
    zeros = -np.ones(order)
    gain = float(np.real(np.prod(1.0 - poles)) / 2.0 ** order)
    b = gain * np.real(np.poly(zeros))
    a = np.real(np.poly(poles))
    if np.any(np.abs(poles) >= 1.0):
        raise FilterError("designed filter is unstable")
    return FilterSpec(order, float(cutoff_hz), float(fs), b=b, a=a, zeros=zeros, poles=poles,
                      gain=gain)


def frequency_response(spec: FilterSpec, freqs_hz) -> np.ndarray:
    """Complex H(e^{jw}) at the given frequencies, from the factored form."""
    z = np.exp(2j * np.pi * np.asarray(freqs_hz, dtype=float) / spec.fs)
    num = np.prod(z[..., None] - spec.zeros, axis=-1)
    den = np.prod(z[..., None] - spec.poles, axis=-1)
    return spec.gain * num / den


def analog_magnitude(spec: FilterSpec, freqs_hz) -> np.ndarray:
    """|H| of the analog prototype at the bilinear-warped frequencies."""
    f = np.asarray(freqs_hz, dtype=float)
    ratio = np.tan(np.pi * f / spec.fs) / np.tan(np.pi * spec.cutoff_hz / spec.fs)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * spec.order))


def butterworth_lowpass(values, spec: FilterSpec) -> np.ndarray:
    """Causal single-pass filtering along axis 0, starting from rest."""
    sos = signal.zpk2sos(spec.zeros, spec.poles, spec.gain)
    return signal.sosfilt(sos, np.asarray(values, dtype=float), axis=0)
