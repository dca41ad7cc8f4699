"""Complex multi-coil tensors, centered unitary Fourier transforms,
coil-sensitivity operators, and diffusion schedules.

Array conventions
-----------------
k-space and image tensors are complex128 numpy arrays with shape
``(..., nc, ky, kx)``: coil axis first, then phase-encode rows and readout
columns. All operations broadcast over leading batch axes. The frequency
origin (DC) sits at index ``(ky // 2, kx // 2)`` after the centered
transforms below; normalized frequency coordinates live in [-0.5, 0.5).

Sensitivity maps are ``(nc, ky, kx)`` complex arrays normalized pointwise so
that ``sum_c |s_c(p)|^2 == 1`` at every pixel. Under this normalization the
coil projection implemented by :func:`coil_project` is orthogonal:
idempotent and self-adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

from .errors import DimensionError, ScheduleError, StepIndexError

__all__ = [
    "fft2c",
    "ifft2c",
    "freq_sq_grid",
    "complex_noise",
    "check_smaps",
    "smaps_multiply",
    "smaps_combine",
    "coil_expand",
    "coil_combine",
    "coil_project",
    "AcsRegion",
    "SamplingMask",
    "DiffusionSchedule",
    "build_schedule",
    "tau_for_acs",
]


def _check_2d(x: np.ndarray) -> None:
    if x.ndim < 2:
        raise DimensionError(f"expected at least 2 dims, got shape {x.shape}")
    if x.shape[-1] == 0 or x.shape[-2] == 0:
        raise DimensionError(f"zero-length transform axis in shape {x.shape}")


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered, unitary 2-D FFT over the trailing two axes.

    Unitary (``norm='ortho'``) so Parseval holds exactly:
    ``norm(fft2c(x)) == norm(x)``. DC lands at index (ky//2, kx//2).
    """
    _check_2d(x)
    shifted = np.fft.ifftshift(x, axes=(-2, -1))
    k = _fft.fft2(shifted, norm="ortho")
    return np.fft.fftshift(k, axes=(-2, -1))


def ifft2c(z: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`fft2c`."""
    _check_2d(z)
    shifted = np.fft.ifftshift(z, axes=(-2, -1))
    x = _fft.ifft2(shifted, norm="ortho")
    return np.fft.fftshift(x, axes=(-2, -1))


def freq_sq_grid(ky: int, kx: int) -> np.ndarray:
    """Squared frequency radius |w|^2 on the centered grid, w in [-0.5, 0.5)^2."""
    if ky < 1 or kx < 1:
        raise DimensionError(f"grid dims must be positive, got {(ky, kx)}")
    wy = np.fft.fftshift(np.fft.fftfreq(ky))
    wx = np.fft.fftshift(np.fft.fftfreq(kx))
    return wy[:, None] ** 2 + wx[None, :] ** 2


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian: real and imaginary parts each N(0, 1).

    Per-entry E|n|^2 = 2; this matches treating the complex data as two
    stacked real channels.
    """
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# Coil sensitivity operators
# ---------------------------------------------------------------------------


def check_smaps(smaps: np.ndarray, tol: float = 1e-10) -> None:
    """Validate pointwise normalization sum_c |s_c|^2 == 1 within ``tol``."""
    if smaps.ndim != 3:
        raise DimensionError(f"sensitivity maps must be (nc, ky, kx), got {smaps.shape}")
    power = np.sum(np.abs(smaps) ** 2, axis=0)
    err = float(np.max(np.abs(power - 1.0)))
    if err > tol:
        raise DimensionError(f"sensitivity maps not normalized: max |sum|s|^2 - 1| = {err:.3e}")


def _check_coils(z: np.ndarray, smaps: np.ndarray) -> None:
    if z.ndim < 3:
        raise DimensionError(f"expected (..., nc, ky, kx), got shape {z.shape}")
    if z.shape[-3:] != smaps.shape:
        raise DimensionError(f"coil mismatch: data {z.shape[-3:]} vs maps {smaps.shape}")


def _uniform_coil_vector(smaps: np.ndarray) -> np.ndarray | None:
    """Coil weights when the maps are spatially constant, else None.

    Spatially uniform maps commute with the Fourier transform, so the coil
    operators act pointwise per frequency and the transforms can be skipped.
    """
    v = smaps[:, :1, :1]
    if np.all(smaps == v):
        return v[:, 0, 0]
    return None


def smaps_multiply(img: np.ndarray, smaps: np.ndarray) -> np.ndarray:
    """Expand a single-channel image to coil images: ``s_c * img``."""
    return smaps * img[..., None, :, :]


def smaps_combine(coil_img: np.ndarray, smaps: np.ndarray) -> np.ndarray:
    """Contract coil images to one channel: ``sum_c conj(s_c) * x_c``."""
    _check_coils(coil_img, smaps)
    return np.einsum("cyx,...cyx->...yx", np.conj(smaps), coil_img)


def coil_expand(k_single: np.ndarray, smaps: np.ndarray) -> np.ndarray:
    """k-space coil expansion: F S F^-1 applied to single-channel k-space."""
    u = _uniform_coil_vector(smaps)
    if u is not None:
        return u[:, None, None] * k_single[..., None, :, :]
    return fft2c(smaps_multiply(ifft2c(k_single), smaps))


def coil_combine(z: np.ndarray, smaps: np.ndarray) -> np.ndarray:
    """k-space coil contraction: F S* F^-1, the adjoint of :func:`coil_expand`."""
    _check_coils(z, smaps)
    u = _uniform_coil_vector(smaps)
    if u is not None:
        return np.einsum("c,...cyx->...yx", np.conj(u), z)
    return fft2c(smaps_combine(ifft2c(z), smaps))


def coil_project(z: np.ndarray, smaps: np.ndarray) -> np.ndarray:
    """Project multi-coil k-space onto the coil-sensitivity subspace.

    Computes ``fft2c(S (S* ifft2c(z)))``. With normalized maps this is an
    orthogonal projection: applying it twice equals applying it once, and it
    is self-adjoint. All noise injected by the diffusion lives in its range.
    """
    _check_coils(z, smaps)
    u = _uniform_coil_vector(smaps)
    if u is not None:
        combined = np.einsum("c,...cyx->...yx", np.conj(u), z)
        return u[:, None, None] * combined[..., None, :, :]
    img = ifft2c(z)
    combined = np.einsum("cyx,...cyx->...yx", np.conj(smaps), img)
    return fft2c(smaps * combined[..., None, :, :])


# ---------------------------------------------------------------------------
# Sampling masks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AcsRegion:
    """Half-open extents [y0, y1) x [x0, x1) of the fully sampled center."""

    y0: int
    y1: int
    x0: int
    x1: int

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)


@dataclass
class SamplingMask:
    """Binary acquisition mask over (ky, kx) with its ACS rectangle."""

    mask: np.ndarray  # uint8 (ky, kx), 1 = acquired
    acs: AcsRegion

    def __post_init__(self) -> None:
        if self.mask.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {self.mask.shape}")
        if not self.mask.any():
            raise DimensionError("mask has no acquired samples")
        sl = self.acs.slices()
        if not np.all(self.mask[sl]):
            raise DimensionError("ACS region is not fully sampled")


def extract_acs(z: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Slice the fully sampled calibration block out of k-space data."""
    sy, sx = mask.acs.slices()
    return z[..., sy, sx]


# ---------------------------------------------------------------------------
# Diffusion schedule
# ---------------------------------------------------------------------------


@dataclass
class DiffusionSchedule:
    """Paired attenuation masks and noise levels over discrete steps 0..N.

    ``ghat[i] = exp(-tau[i] * |w|^2)`` on the centered normalized frequency
    grid, so masks obey the exact semigroup law
    ``ghat(a) * ghat(b) == ghat(a + b)``. ``tau[0] == 0`` makes step 0 the
    identity. ``sigma`` is strictly increasing with ``sigma[0] > 0``.
    """

    n_steps: int
    tau: np.ndarray  # (N+1,)
    sigma: np.ndarray  # (N+1,)
    ghat: np.ndarray  # (N+1, ky, kx)
    freq_sq: np.ndarray  # (ky, kx)

    @property
    def shape(self) -> tuple[int, int]:
        return self.freq_sq.shape

    def ghat_at(self, tau: float) -> np.ndarray:
        """Attenuation mask at an arbitrary (continuous) exponent tau."""
        return np.exp(-tau * self.freq_sq)

    def check_step(self, i: int) -> None:
        if not 0 <= i <= self.n_steps:
            raise StepIndexError(f"step index {i} outside [0, {self.n_steps}]")


def build_schedule(
    ky: int,
    kx: int,
    n_steps: int,
    sigma0: float = 0.01,
    sigma_n: float = 1.0,
    tau_n: float | None = None,
    gamma: float = 2.0,
) -> DiffusionSchedule:
    """Construct a power-law attenuation / geometric noise schedule.

    tau_i = tau_n * (i/N)^gamma and sigma_i = sigma0 * (sigma_n/sigma0)^(i/N).
    ``tau_n`` defaults to the value at which the terminal mask has fallen to
    0.5 at one eighth of the band (see :func:`tau_for_acs` to match a
    specific ACS width).
    """
    if n_steps < 1:
        raise ScheduleError(f"n_steps must be >= 1, got {n_steps}")
    if not (0 < sigma0 < sigma_n):
        raise ScheduleError(f"need 0 < sigma0 < sigma_n, got {sigma0}, {sigma_n}")
    if tau_n is None:
        tau_n = tau_for_acs(ky, ky // 4)
    if tau_n <= 0:
        raise ScheduleError(f"tau_n must be positive, got {tau_n}")
    if gamma <= 0:
        raise ScheduleError(f"gamma must be positive, got {gamma}")

    steps = np.arange(n_steps + 1) / n_steps
    tau = tau_n * steps**gamma
    sigma = sigma0 * (sigma_n / sigma0) ** steps
    fsq = freq_sq_grid(ky, kx)
    ghat = np.exp(-tau[:, None, None] * fsq[None])
    return DiffusionSchedule(n_steps=n_steps, tau=tau, sigma=sigma, ghat=ghat, freq_sq=fsq)


def tau_for_acs(k: int, acs_extent: int) -> float:
    """Terminal attenuation exponent whose mask FWHM matches an ACS width.

    The returned tau satisfies exp(-tau * w_half^2) = 0.5 at the normalized
    ACS half-width w_half = (acs_extent/2) / k, so at terminal time only
    ACS-scale low frequencies survive.
    """
    if acs_extent < 1 or acs_extent > k:
        raise ScheduleError(f"ACS extent {acs_extent} invalid for grid size {k}")
    w_half = (acs_extent / 2.0) / k
    return float(np.log(2.0) / w_half**2)
