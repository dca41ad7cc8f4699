"""Forward attenuation process: Gaussian k-space attenuation plus
coil-shaped noise, with numerical certificates that the attenuation is a
heat flow (spectral ODE check and convolution-theorem check).
"""
from __future__ import annotations

import numpy as np

from .core import DiffusionSchedule, coil_project, complex_noise, fft2c, ifft2c
from .errors import DimensionError

__all__ = [
    "attenuate",
    "sample_perturbation",
    "heat_residual",
    "circular_convolve",
    "convolution_equivalence",
]


def attenuate(z0: np.ndarray, sched: DiffusionSchedule, i: int) -> np.ndarray:
    """Apply the step-``i`` low-pass attenuation mask: ``ghat[i] * z0``.

    The mask broadcasts across coils (and any leading batch axes). Step 0 is
    the identity.
    """
    sched.check_step(i)
    return sched.ghat[i] * z0


def sample_perturbation(
    z0: np.ndarray,
    smaps: np.ndarray,
    sched: DiffusionSchedule,
    i: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw from the forward perturbation kernel at step ``i``.

    Returns ``ghat[i] * z0 + sqrt(sigma_i^2 - sigma_0^2) * P n`` where ``P``
    is the coil projection and ``n`` is standard complex Gaussian noise. At
    i = 0 the noise amplitude is exactly zero.
    """
    sched.check_step(i)
    mean = attenuate(z0, sched, i)
    amp = np.sqrt(sched.sigma[i] ** 2 - sched.sigma[0] ** 2)
    if amp == 0.0:
        return mean
    noise = complex_noise(rng, z0.shape)
    return mean + amp * coil_project(noise, smaps)


def heat_residual(z0: np.ndarray, sched: DiffusionSchedule, i: int, dtau: float) -> float:
    """Relative residual of the spectral heat ODE at interior step ``i``.

    Certifies d(zhat)/dtau = -|w|^2 * zhat for zhat(tau) = ghat(tau) * z0 by
    a central difference of half-width ``dtau`` around tau_i:

        || (zhat(tau+dtau) - zhat(tau-dtau)) / (2 dtau) + |w|^2 zhat(tau) ||
        -----------------------------------------------------------------
                          || |w|^2 zhat(tau) ||

    Second-order accurate: the residual shrinks ~4x when ``dtau`` halves.
    Returns 0.0 for data supported only at DC (both numerator and the
    reference are exactly zero there).
    """
    if dtau <= 0:
        raise DimensionError(f"dtau must be positive, got {dtau}")
    if not 0 < i < sched.n_steps:
        sched.check_step(i)
        raise DimensionError(f"heat residual needs an interior step, got i={i}")
    tau = sched.tau[i]
    z_plus = sched.ghat_at(tau + dtau) * z0
    z_minus = sched.ghat_at(tau - dtau) * z0
    z_mid = sched.ghat_at(tau) * z0
    deriv = (z_plus - z_minus) / (2.0 * dtau)
    flow = sched.freq_sq * z_mid
    denom = float(np.linalg.norm(flow))
    num = float(np.linalg.norm(deriv + flow))
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / denom


def circular_convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct (summation-based) circular 2-D convolution on centered grids.

    ``out[p] = sum_q kernel[q] * img[p - q]`` with indices taken relative to
    the centered origin (ky//2, kx//2) and wrapped periodically. Quadratic
    cost; this is the independent reference path for the convolution
    theorem, so it deliberately avoids FFTs.
    """
    ky, kx = kernel.shape[-2:]
    cy, cx = ky // 2, kx // 2
    out = np.zeros(np.broadcast_shapes(img.shape, kernel.shape), dtype=np.complex128)
    for qy in range(ky):
        for qx in range(kx):
            w = kernel[..., qy, qx]
            if isinstance(w, np.ndarray):
                w = w[..., None, None]
            out += w * np.roll(img, (qy - cy, qx - cx), axis=(-2, -1))
    return out


def convolution_equivalence(z: np.ndarray, sched: DiffusionSchedule, i: int) -> float:
    """Relative gap between mask multiplication and spatial convolution.

    Compares ``ifft2c(ghat[i] * fft2c(z))`` against the direct circular
    convolution of ``z`` with the kernel ``ifft2c(ghat[i])`` (scaled for the
    unitary transform convention). Should be at the level of roundoff.
    """
    sched.check_step(i)
    ky, kx = sched.shape
    spectral = ifft2c(sched.ghat[i] * fft2c(z))
    kernel = ifft2c(sched.ghat[i].astype(np.complex128))
    # Unitary DFT convolution theorem carries a sqrt(ky*kx) factor.
    spatial = circular_convolve(z, kernel) / np.sqrt(ky * kx)
    ref = float(np.linalg.norm(spectral))
    if ref == 0.0:
        return float(np.linalg.norm(spatial))
    return float(np.linalg.norm(spectral - spatial)) / ref
