"""Real FFT helpers and FFT-based convolution.

Backed by ``numpy.fft`` (pocketfft), which handles every length; callers
that want a fast size ask for :func:`fft_length`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .core import Tensor, as_tensor, make_result


def fft_length(n: int) -> int:
    """Smallest power of two >= n."""
    return 1 << max(0, int(n - 1).bit_length())


def fft_real(x, n: int | None = None, axis: int = -1) -> np.ndarray:
    """Spectrum of a real sequence (``n // 2 + 1`` bins)."""
    return np.fft.rfft(np.asarray(x, dtype=np.float64), n=n, axis=axis)


def ifft_real(spectrum, n: int, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fft_real` for a length-``n`` real signal."""
    return np.fft.irfft(spectrum, n=n, axis=axis)


def circular_conv(a, b) -> np.ndarray:
    """Circular convolution of two equal-length real sequences via FFT."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError("circular_conv needs equal lengths")
    n = a.shape[-1]
    return ifft_real(fft_real(a) * fft_real(b), n)


def _causal(u: np.ndarray, k: np.ndarray, T: int) -> np.ndarray:
    # u: (..., T, H), k: (H, T) -> (..., T, H)
    n = fft_length(2 * T)
    U = np.fft.rfft(u, n=n, axis=-2)
    K = np.fft.rfft(k.T, n=n, axis=0)
    return np.fft.irfft(U * K, n=n, axis=-2)[..., :T, :]


def causal_conv(u, k) -> Tensor:
    """y[t, h] = sum_{s<=t} k[h, t-s] u[s, h], via zero-padded FFT.

    ``u`` is ``(..., T, H)`` and ``k`` is ``(H, T)``.
    """
    u, k = as_tensor(u), as_tensor(k)
    if u.ndim < 2 or k.ndim != 2 or k.shape != (u.shape[-1], u.shape[-2]):
        raise ShapeError(f"causal_conv shapes {u.shape} and {k.shape} do not match")
    T = u.shape[-2]
    ud, kd = u.data, k.data
    y = _causal(ud, kd, T)

    def backward(g):
        n = fft_length(2 * T)
        G = np.fft.rfft(g, n=n, axis=-2)
        K = np.fft.rfft(kd.T, n=n, axis=0)
        U = np.fft.rfft(ud, n=n, axis=-2)
        gu = np.fft.irfft(G * np.conj(K), n=n, axis=-2)[..., :T, :]
        cross = np.fft.irfft(G * np.conj(U), n=n, axis=-2)[..., :T, :]
        gk = cross.reshape(-1, T, kd.shape[0]).sum(axis=0).T
        return gu, gk

    return make_result("causal_conv", y, (u, k), backward)
