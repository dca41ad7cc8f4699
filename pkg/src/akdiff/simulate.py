"""Synthetic data: ellipse phantoms, smooth coil maps, sampling masks, and
Gaussian-prior training sets. Everything is deterministic given the seed.
"""
from __future__ import annotations

import numpy as np

from .core import AcsRegion, SamplingMask, complex_noise, fft2c, freq_sq_grid, ifft2c
from .errors import DimensionError

__all__ = [
    "make_phantom",
    "make_mask",
    "make_gaussian_prior_set",
    "constant_smaps",
]

# (y0, x0, half_axis_y, half_axis_x, angle_deg, intensity) in [-1, 1] coords.
_ELLIPSES = (
    (0.0, 0.0, 0.92, 0.69, 90.0, 1.0),
    (-0.0184, 0.0, 0.874, 0.6624, 90.0, -0.35),
    (0.0, 0.22, 0.31, 0.11, 72.0, -0.2),
    (0.0, -0.22, 0.41, 0.16, 108.0, -0.2),
    (0.35, 0.0, 0.25, 0.21, 90.0, 0.35),
    (0.1, 0.0, 0.046, 0.046, 0.0, 0.3),
    (-0.1, 0.0, 0.046, 0.046, 0.0, 0.3),
    (-0.605, -0.08, 0.046, 0.023, 0.0, 0.25),
    (-0.606, 0.0, 0.023, 0.023, 0.0, 0.25),
    (-0.605, 0.06, 0.046, 0.023, 90.0, 0.25),
)


def _ellipse_sum(ky: int, kx: int) -> np.ndarray:
    yy = np.linspace(-1.0, 1.0, ky, endpoint=False)[:, None]
    xx = np.linspace(-1.0, 1.0, kx, endpoint=False)[None, :]
    img = np.zeros((ky, kx))
    for y0, x0, ay, ax, ang, val in _ELLIPSES:
        th = np.deg2rad(ang)
        yr = (yy - y0) * np.cos(th) + (xx - x0) * np.sin(th)
        xr = -(yy - y0) * np.sin(th) + (xx - x0) * np.cos(th)
        img += val * ((yr / ay) ** 2 + (xr / ax) ** 2 <= 1.0)
    return img


def make_phantom(ky: int, kx: int, nc: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-smooth ellipse phantom with mild phase, plus coil maps.

    Returns ``(image, smaps)`` where ``image`` is a (ky, kx) complex image
    and ``smaps`` is (nc, ky, kx) normalized so the per-pixel coil power is
    one. The coil images are ``smaps * image``. Sharp ellipse edges are
    softened with a light low-pass so the spectrum concentrates in the
    central quarter band.
    """
    if nc < 1:
        raise DimensionError(f"need at least one coil, got nc={nc}")
    if ky < 2 or kx < 2 or ky % 2 or kx % 2:
        raise DimensionError(f"phantom dims must be even and >= 2, got {(ky, kx)}")
    rng = np.random.default_rng(seed)

    base = _ellipse_sum(ky, kx)
    # Soften edges: attenuate the spectrum like a half-pixel-scale blur.
    spec = fft2c(base.astype(np.complex128))
    spec *= np.exp(-6.0 * freq_sq_grid(ky, kx))
    smooth = np.real(ifft2c(spec))

    yy = np.linspace(-1.0, 1.0, ky, endpoint=False)[:, None]
    xx = np.linspace(-1.0, 1.0, kx, endpoint=False)[None, :]
    ramp = rng.uniform(0.2, 0.6, size=2)
    phase = ramp[0] * yy + ramp[1] * xx + 0.1 * yy * xx
    image = smooth * np.exp(1j * np.pi * phase)

    smaps = _ring_smaps(ky, kx, nc, rng)
    return image.astype(np.complex128), smaps


def _ring_smaps(ky: int, kx: int, nc: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian lobes on a ring, times a low-order complex polynomial,
    normalized pointwise."""
    yy = np.linspace(-1.0, 1.0, ky, endpoint=False)[:, None]
    xx = np.linspace(-1.0, 1.0, kx, endpoint=False)[None, :]
    maps = np.zeros((nc, ky, kx), dtype=np.complex128)
    jitter = rng.uniform(-0.2, 0.2, size=nc)
    for c in range(nc):
        th = 2.0 * np.pi * c / nc + jitter[c]
        cy, cx = 0.55 * np.sin(th), 0.55 * np.cos(th)
        lobe = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * 0.65**2))
        poly = 1.0 + 0.3 * (xx + 1j * yy) * np.exp(1j * th)
        maps[c] = lobe * poly
    power = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / power


def constant_smaps(ky: int, kx: int, nc: int) -> np.ndarray:
    """Spatially constant maps (each coil 1/sqrt(nc)); the coil projection
    then acts pointwise per frequency."""
    return np.full((nc, ky, kx), 1.0 / np.sqrt(nc), dtype=np.complex128)


def make_mask(
    kind: str,
    ky: int,
    kx: int,
    r: int = 1,
    acs_lines: int = 0,
    seed: int = 0,
) -> SamplingMask:
    """Build a line-based sampling mask.

    kind 'uniform': every r-th phase-encode line plus ``acs_lines`` centered
    lines. kind 'random': Bernoulli lines at rate 1/r (seeded) plus ACS.
    kind 'acs-only': the centered line block only. ACS lines span all
    readout columns.
    """
    if r < 1:
        raise DimensionError(f"acceleration factor must be >= 1, got {r}")
    if acs_lines < 0 or acs_lines > ky:
        raise DimensionError(f"ACS lines {acs_lines} exceed grid ({ky})")
    lines = np.zeros(ky, dtype=np.uint8)
    if kind == "uniform":
        lines[::r] = 1
    elif kind == "random":
        rng = np.random.default_rng(seed)
        lines[rng.random(ky) < 1.0 / r] = 1
    elif kind == "acs-only":
        if acs_lines < 1:
            raise DimensionError("acs-only mask needs acs_lines >= 1")
    else:
        raise DimensionError(f"unknown mask kind {kind!r}")
    y0 = ky // 2 - acs_lines // 2
    y1 = y0 + acs_lines
    lines[y0:y1] = 1
    if acs_lines == 0:
        # Degenerate ACS descriptor: the densest single acquired line.
        y0 = int(np.argmax(lines))
        y1 = y0 + 1
    mask = np.broadcast_to(lines[:, None], (ky, kx)).copy()
    return SamplingMask(mask=mask, acs=AcsRegion(y0=y0, y1=y1, x0=0, x1=kx))


def make_gaussian_prior_set(
    ky: int,
    kx: int,
    nc: int,
    n_samples: int,
    rng: np.random.Generator,
    var: np.ndarray | None = None,
) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    """Draw multi-coil k-space samples from a per-frequency Gaussian prior.

    The combined channel at frequency w is CN(0, var(w)) (E|a|^2 = var) and
    the coil maps are constant, so denoising losses decouple exactly per
    frequency. Returns ``(z0_list, smaps, var)``.
    """
    if var is None:
        fsq = freq_sq_grid(ky, kx)
        var = 400.0 * (1.0 - 0.2 * (fsq / 0.5))
    smaps = constant_smaps(ky, kx, nc)
    z0s = []
    for _ in range(n_samples):
        a = np.sqrt(var / 2.0) * complex_noise(rng, (ky, kx))
        # Constant maps commute with the Fourier transform, so the coil
        # expansion is a pointwise weighting in k-space.
        z0s.append(smaps * a[None, :, :])
    return z0s, smaps, var
