"""Torus Fourier-window helpers shared across the engine.

Coefficient arrays for a function on the n-torus are stored on a hypercube
window |k|_inf <= K: shape (2K+1,)*n + tail, axis index i <-> mode k = i - K.
Grid values use the convention f(theta_m) = sum_k c_k exp(i<k, theta_m>) on the
uniform grid theta_m = 2*pi*m/G.
"""

from __future__ import annotations

import numpy as np

_SMOOTH_SIZES = sorted(
    {
        2**a * 3**b * 5**c
        for a in range(12)
        for b in range(8)
        for c in range(6)
        if 2**a * 3**b * 5**c <= 4096
    }
)


def fast_grid_size(minimum: int) -> int:
    """Smallest 5-smooth FFT size >= minimum."""
    for s in _SMOOTH_SIZES:
        if s >= minimum:
            return s
    raise ValueError(f"no cached FFT size >= {minimum}")


def product_grid_size(K: int) -> int:
    """Grid large enough that pairwise products of window-K data read back
    alias-free on the window (needs G > 3K)."""
    return fast_grid_size(3 * K + 2)


def window_width(K: int) -> int:
    return 2 * K + 1


def kvalues(K: int) -> np.ndarray:
    return np.arange(-K, K + 1)


def kgrid(n: int, K: int) -> np.ndarray:
    """Integer mode vectors on the window, shape (2K+1,)*n + (n,)."""
    axes = np.meshgrid(*([kvalues(K)] * n), indexing="ij")
    return np.stack(axes, axis=-1)


def kdot(omega: np.ndarray, n: int, K: int) -> np.ndarray:
    """<k, omega> over the window, shape (2K+1,)*n."""
    return kgrid(n, K) @ np.asarray(omega, dtype=float)


def kinf(n: int, K: int) -> np.ndarray:
    """|k|_inf over the window."""
    return np.max(np.abs(kgrid(n, K)), axis=-1)


def embed_window(coeffs: np.ndarray, n: int, K: int, G: int) -> np.ndarray:
    """Place window coefficients into an FFT-layout array of size G per axis."""
    if G < 2 * K + 1:
        raise ValueError("FFT grid too small for the coefficient window")
    out_shape = (G,) * n + coeffs.shape[n:]
    out = np.zeros(out_shape, dtype=complex)
    idx = tuple(kvalues(K) % G for _ in range(n))
    out[np.ix_(*idx)] = coeffs
    return out


def extract_window(fft_coeffs: np.ndarray, n: int, K: int) -> np.ndarray:
    G = fft_coeffs.shape[0]
    idx = tuple(kvalues(K) % G for _ in range(n))
    return fft_coeffs[np.ix_(*idx)]


def window_to_grid(coeffs: np.ndarray, n: int, K: int, G: int) -> np.ndarray:
    """Values sum_k c_k e^{i k.theta} on the uniform G^n grid."""
    return np.fft.ifftn(embed_window(coeffs, n, K, G), axes=tuple(range(n)), norm="forward")


def grid_to_window(values: np.ndarray, n: int, K: int) -> np.ndarray:
    """Read window coefficients off uniform grid samples."""
    hat = np.fft.fftn(values, axes=tuple(range(n)), norm="forward")
    return extract_window(hat, n, K)


def project_window_grid(values: np.ndarray, n: int, K: int) -> np.ndarray:
    """Kill all grid content outside the coefficient window, in place of values."""
    G = values.shape[0]
    hat = np.fft.fftn(values, axes=tuple(range(n)), norm="forward")
    mask = np.zeros((G,) * n, dtype=bool)
    idx = tuple(kvalues(K) % G for _ in range(n))
    mask[np.ix_(*idx)] = True
    hat *= mask.reshape(mask.shape + (1,) * (values.ndim - n))
    return np.fft.ifftn(hat, axes=tuple(range(n)), norm="forward")


def eval_at_points(coeffs: np.ndarray, n: int, K: int, thetas: np.ndarray) -> np.ndarray:
    """Evaluate sum_k c_k e^{i k.theta} at arbitrary points, shape (P,) + tail.

    Only modes whose max-magnitude exceeds a relative floor participate, so the
    cost tracks the active band rather than the full window.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    W = window_width(K)
    flat = coeffs.reshape((W**n,) + coeffs.shape[n:])
    mags = np.abs(flat).reshape(W**n, -1).max(axis=1)
    top = mags.max()
    active = np.nonzero(mags > 1e-300 + 1e-16 * top)[0]
    if active.size == 0:
        return np.zeros((thetas.shape[0],) + coeffs.shape[n:], dtype=complex)
    kv = kgrid(n, K).reshape(W**n, n)[active]
    phases = np.exp(1j * (thetas @ kv.T))  # (P, active)
    return np.tensordot(phases, flat[active], axes=(1, 0))


def theta_grid_points(n: int, G: int) -> np.ndarray:
    """The uniform grid as a flat (G^n, n) point list, C order."""
    ax = 2.0 * np.pi * np.arange(G) / G
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def reality_enforce(coeffs: np.ndarray, n: int, K: int) -> np.ndarray:
    """Average with the conjugate-reflected coefficients so that the underlying
    theta-function is exactly real (c(-k) = conj(c(k)))."""
    rev = coeffs[(slice(None, None, -1),) * n]
    return 0.5 * (coeffs + np.conj(rev))


def reality_residual(coeffs: np.ndarray, n: int, K: int) -> float:
    rev = coeffs[(slice(None, None, -1),) * n]
    return float(np.max(np.abs(coeffs - np.conj(rev))))
