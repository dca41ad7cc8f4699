"""Image-domain evaluation: sum-of-squares coil combination, NMSE, PSNR,
and SSIM on magnitude images.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, UndefinedReferenceError

__all__ = ["sos_combine", "nmse", "psnr", "ssim"]


def sos_combine(x: np.ndarray) -> np.ndarray:
    """Per-pixel square root of the summed squared coil magnitudes."""
    if x.ndim < 3:
        raise DimensionError(f"expected (..., nc, ky, kx), got shape {x.shape}")
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=-3))


def nmse(ref: np.ndarray, test: np.ndarray) -> float:
    """||test - ref||^2 / ||ref||^2."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    denom = float(np.sum(ref**2))
    if denom == 0.0:
        raise UndefinedReferenceError("NMSE reference is identically zero")
    return float(np.sum((test - ref) ** 2)) / denom


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; peak is the reference maximum.

    Returns +inf when the images are identical (zero mean squared error).
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    mse = float(np.mean((test - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    peak = float(np.max(ref))
    return 10.0 * np.log10(peak**2 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(r**2) / (2.0 * sigma**2))
    k /= k.sum()
    return np.outer(k, k)


def _valid_windows(img: np.ndarray, size: int) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view

    return sliding_window_view(img, (size, size))


def ssim(
    ref: np.ndarray,
    test: np.ndarray,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float | None = None,
) -> float:
    """Mean local structural similarity over valid Gaussian windows.

    Uses the conventional 11-tap Gaussian window (std 1.5) and stabilizing
    constants ``k1``/``k2``. ``data_range`` defaults to the reference
    maximum; pass it explicitly to make the score symmetric in its
    arguments.
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if ref.ndim != 2:
        raise DimensionError(f"ssim expects 2-D magnitude images, got {ref.shape}")
    if min(ref.shape) < window:
        raise DimensionError(f"image {ref.shape} smaller than window {window}")
    if data_range is None:
        data_range = float(np.max(ref))
    if data_range == 0.0:
        data_range = 1.0

    kern = _gaussian_kernel(window, 1.5)
    wr = _valid_windows(ref, window)
    wt = _valid_windows(test, window)
    mu_r = np.einsum("ijkl,kl->ij", wr, kern)
    mu_t = np.einsum("ijkl,kl->ij", wt, kern)
    m_rr = np.einsum("ijkl,kl->ij", wr * wr, kern)
    m_tt = np.einsum("ijkl,kl->ij", wt * wt, kern)
    m_rt = np.einsum("ijkl,kl->ij", wr * wt, kern)
    var_r = m_rr - mu_r**2
    var_t = m_tt - mu_t**2
    cov = m_rt - mu_r * mu_t

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_r * mu_t + c1) * (2.0 * cov + c2)
    den = (mu_r**2 + mu_t**2 + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))
