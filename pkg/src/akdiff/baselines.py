"""Classical reconstruction baselines: nonlinear-diffusion flow in the image
domain, single-shift coil-operator extrapolation in k-space, and the
zero-filled adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SamplingMask, fft2c, ifft2c, smaps_combine, smaps_multiply
from .errors import CalibrationError, DimensionError, StepSizeError

__all__ = [
    "pm_flow",
    "GrappaOperator",
    "grappa_operator_fit",
    "grappa_operator_extrapolate",
    "zero_filled",
]


def _grad2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Forward differences, periodic boundaries.
    gy = np.roll(x, -1, axis=-2) - x
    gx = np.roll(x, -1, axis=-1) - x
    return gy, gx


def _div2(vy: np.ndarray, vx: np.ndarray) -> np.ndarray:
    # Backward-difference divergence: negative adjoint of _grad2.
    return (vy - np.roll(vy, 1, axis=-2)) + (vx - np.roll(vx, 1, axis=-1))


def pm_flow(
    y: np.ndarray,
    mask: SamplingMask,
    smaps: np.ndarray,
    lam: float = 0.005,
    step: float = 0.5,
    iters: int = 200,
    eps: float = 1e-6,
) -> np.ndarray:
    """Edge-preserving diffusion flow with data consistency.

    Explicit Euler on the total-variation-regularized coil-encoding model:
    each iteration moves against the data-term gradient A*(A x - y) with
    A = (mask) fft2c (smaps .), and along the smoothed curvature term
    div(grad x / (|grad x| + eps)). The curvature direction descends the
    smoothed total variation. Returns the single-channel complex image
    after ``iters`` steps.

    Raises :class:`StepSizeError` if the data residual grows 10x over its
    initial value.
    """
    if step <= 0:
        raise StepSizeError(f"step must be positive, got {step}")
    if eps <= 0:
        raise StepSizeError(f"eps must be positive, got {eps}")
    m = mask.mask.astype(np.float64)

    def fwd(x: np.ndarray) -> np.ndarray:
        return m * fft2c(smaps_multiply(x, smaps))

    def adj(k: np.ndarray) -> np.ndarray:
        return smaps_combine(ifft2c(m * k), smaps)

    x = np.zeros(mask.mask.shape, dtype=np.complex128)
    res0 = None
    for it in range(iters):
        resid_k = fwd(x) - y
        resid = float(np.linalg.norm(resid_k))
        if res0 is None:
            res0 = max(resid, 1e-300)
        if resid > 10.0 * res0:
            raise StepSizeError(f"diffusion flow diverged at iteration {it}")
        update = -adj(resid_k)
        if lam != 0.0:
            gy, gx = _grad2(x)
            mag = np.sqrt(np.abs(gy) ** 2 + np.abs(gx) ** 2) + eps
            update = update + lam * _div2(gy / mag, gx / mag)
        x = x + step * update
    return x


@dataclass
class GrappaOperator:
    """Single-shift coil-mixing operator along one k-space axis.

    ``k`` maps the coil vector at a position to the coil vector ``shift``
    samples further along ``axis`` (0 = phase-encode rows, 1 = readout
    columns). ``evolution`` exposes the finite-difference generator
    (k - I) / delta in normalized frequency units (delta = shift / size).
    """

    k: np.ndarray  # (nc, nc)
    axis: int
    shift: int
    residual: float
    ridge_used: bool = False

    def evolution(self, size: int) -> np.ndarray:
        delta = self.shift / size
        return (self.k - np.eye(self.k.shape[0])) / delta


def grappa_operator_fit(
    acs: np.ndarray, axis: int = 1, shift: int = 1, ridge: float = 1e-8
) -> GrappaOperator:
    """Least-squares fit of the coil operator on calibration data.

    Minimizes ``sum_w || K col(w) - col(w + shift) ||^2`` over all column
    pairs in the ACS block, where col(w) stacks the coil values at one
    (row, column) position. Falls back to a ridge-regularized solve (flagged
    on the result) when the normal matrix is rank deficient.
    """
    if acs.ndim != 3:
        raise DimensionError(f"expected ACS block (nc, ay, ax), got {acs.shape}")
    if axis not in (0, 1):
        raise DimensionError(f"axis must be 0 or 1, got {axis}")
    if shift == 0:
        raise DimensionError("shift must be nonzero")
    nc = acs.shape[0]
    extent = acs.shape[1 + axis]
    if extent <= abs(shift):
        raise CalibrationError(
            f"ACS extent {extent} too narrow for shift {shift} along axis {axis}"
        )
    a = np.moveaxis(acs, 1 + axis, -1)  # (nc, other, extent)
    if shift > 0:
        src, tgt = a[..., :-shift], a[..., shift:]
    else:
        src, tgt = a[..., -shift:], a[..., :shift]
    s = src.reshape(nc, -1)  # sources as columns
    t = tgt.reshape(nc, -1)
    gram = s @ s.conj().T
    rhs = t @ s.conj().T
    ridge_used = False
    try:
        k = np.linalg.solve(gram.T, rhs.T).T
        if not np.all(np.isfinite(k)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge_used = True
        reg = ridge * float(np.trace(gram).real) / nc if np.trace(gram).real > 0 else ridge
        k = np.linalg.solve((gram + reg * np.eye(nc)).T, rhs.T).T
    resid = float(np.linalg.norm(k @ s - t))
    return GrappaOperator(k=k, axis=axis, shift=shift, residual=resid, ridge_used=ridge_used)


def _acquired_band(z: np.ndarray, axis: int) -> tuple[int, int]:
    """Contiguous nonzero slab around the center along ``axis``."""
    energy = np.sum(np.abs(z), axis=tuple(i for i in range(z.ndim) if i != 1 + axis))
    size = energy.shape[0]
    center = size // 2
    if energy[center] == 0:
        nz = np.nonzero(energy)[0]
        if len(nz) == 0:
            raise DimensionError("input has no acquired band to extrapolate from")
        center = nz[len(nz) // 2]
    lo = center
    while lo - 1 >= 0 and energy[lo - 1] > 0:
        lo -= 1
    hi = center
    while hi + 1 < size and energy[hi + 1] > 0:
        hi += 1
    return lo, hi


def grappa_operator_extrapolate(
    z_low: np.ndarray, op: GrappaOperator, n_steps: int
) -> np.ndarray:
    """Fill missing positions outward from the acquired band.

    Iterates ``col(w + shift) = K col(w)`` starting at the band edge on the
    side the operator's shift points to, for ``n_steps`` positions (clipped
    at the grid edge). Acquired positions are never modified.
    """
    if n_steps < 0:
        raise DimensionError(f"n_steps must be >= 0, got {n_steps}")
    out = np.array(z_low, dtype=np.complex128, copy=True)
    if n_steps == 0:
        return out
    lo, hi = _acquired_band(out, op.axis)
    moved = np.moveaxis(out, 1 + op.axis, -1)  # view: (nc, other, size)
    size = moved.shape[-1]
    pos = hi if op.shift > 0 else lo
    for _ in range(n_steps):
        nxt = pos + op.shift
        if not 0 <= nxt < size:
            break
        cols = moved[..., pos].reshape(out.shape[0], -1)
        moved[..., nxt] = (op.k @ cols).reshape(moved.shape[:-1])
        pos = nxt
    return out


def zero_filled(y: np.ndarray, mask: SamplingMask, smaps: np.ndarray) -> np.ndarray:
    """Adjoint reconstruction: coil-combined inverse transform of the
    zero-filled measurements. Exact on fully sampled data."""
    if y.shape[-2:] != mask.mask.shape:
        raise DimensionError(f"data {y.shape} vs mask {mask.mask.shape}")
    return smaps_combine(ifft2c(mask.mask * y), smaps)
