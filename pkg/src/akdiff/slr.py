"""Structured low-rank machinery: block-Hankel lifting, annihilation-filter
calibration from the ACS, and the proximal data-consistency solve used to
correct each denoiser projection.

The Hankel gather/scatter pair is the innermost hot loop of a
reconstruction; a compiled backend is selected at import when available.
Set ``AKDIFF_HANKEL_BACKEND=numpy|cython`` to force a choice.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _hankel_np
from .core import SamplingMask
from .errors import CalibrationError, DimensionError, NumericalError

try:
    from . import _hankel_cy
except ImportError:
    _hankel_cy = None

_forced = os.environ.get("AKDIFF_HANKEL_BACKEND", "")
if _forced == "numpy":
    _impl = _hankel_np
    HANKEL_BACKEND = "numpy"
elif _forced == "cython":
    if _hankel_cy is None:
        raise ImportError(
            "AKDIFF_HANKEL_BACKEND=cython but the compiled extension is not built"
        )
    _impl = _hankel_cy
    HANKEL_BACKEND = "cython"
elif _forced:
    raise ImportError(f"unknown AKDIFF_HANKEL_BACKEND {_forced!r}")
elif _hankel_cy is not None:
    _impl = _hankel_cy
    HANKEL_BACKEND = "cython"
else:
    _impl = _hankel_np
    HANKEL_BACKEND = "numpy"

__all__ = [
    "HANKEL_BACKEND",
    "HankelConfig",
    "AnnihilationFilter",
    "hankelize",
    "hankelize_adjoint",
    "estimate_annihilation",
    "slr_correct",
    "slr_objective",
]


@dataclass(frozen=True)
class HankelConfig:
    """Patch window for the block-Hankel lifting across (ky, kx)."""

    wy: int = 6
    wx: int = 6

    def check(self, ky: int, kx: int) -> None:
        if not (1 <= self.wy <= ky and 1 <= self.wx <= kx):
            raise CalibrationError(
                f"window {(self.wy, self.wx)} does not fit grid {(ky, kx)}"
            )


def hankelize(z: np.ndarray, cfg: HankelConfig) -> np.ndarray:
    """Block-Hankel matrix of valid (non-wrapping) patches.

    Shape ((ky-wy+1)*(kx-wx+1), nc*wy*wx): rows are patch positions in
    row-major order, columns are coil-major in-patch offsets.
    """
    if z.ndim != 3:
        raise DimensionError(f"expected (nc, ky, kx), got shape {z.shape}")
    nc, ky, kx = z.shape
    cfg.check(ky, kx)
    return np.asarray(_impl.hankel_gather(np.ascontiguousarray(z, dtype=np.complex128), cfg.wy, cfg.wx))


def hankelize_adjoint(mat: np.ndarray, nc: int, ky: int, kx: int, cfg: HankelConfig) -> np.ndarray:
    """Adjoint of :func:`hankelize`: satisfies <H(z), Y> == <z, H*(Y)>."""
    cfg.check(ky, kx)
    my, mx = ky - cfg.wy + 1, kx - cfg.wx + 1
    expected = (my * mx, nc * cfg.wy * cfg.wx)
    if mat.shape != expected:
        raise DimensionError(f"patch matrix shape {mat.shape} != expected {expected}")
    return np.asarray(
        _impl.hankel_scatter(
            np.ascontiguousarray(mat, dtype=np.complex128), nc, ky, kx, cfg.wy, cfg.wx
        )
    )


@dataclass
class AnnihilationFilter:
    """Orthonormal nullspace basis of the calibration patch matrix.

    ``filters`` has shape (nc*wy*wx, n_filters); columns annihilate the
    calibrated data: H(acs) @ filters ~ 0. ``empty`` flags a degenerate
    calibration (no nullspace found; the structured-low-rank term is inert).
    """

    filters: np.ndarray
    rank_threshold: float
    window: HankelConfig
    empty: bool = field(default=False)

    @property
    def n_filters(self) -> int:
        return self.filters.shape[1]


def estimate_annihilation(
    acs: np.ndarray, cfg: HankelConfig, rank_threshold: float = 0.05
) -> AnnihilationFilter:
    """Calibrate annihilation filters from a fully sampled ACS block.

    Right singular vectors of H(acs) whose singular values fall below
    ``rank_threshold * sigma_max`` form the filter bank. An empty nullspace
    (e.g. white-noise calibration data) yields a zero-column bank flagged
    ``empty`` rather than an error.
    """
    if not 0.0 < rank_threshold < 1.0:
        raise CalibrationError(f"rank threshold must be in (0, 1), got {rank_threshold}")
    if acs.ndim != 3:
        raise DimensionError(f"expected ACS block (nc, ay, ax), got {acs.shape}")
    nc, ay, ax = acs.shape
    if ay < cfg.wy or ax < cfg.wx:
        raise CalibrationError(
            f"ACS block {(ay, ax)} smaller than window {(cfg.wy, cfg.wx)}"
        )
    h = hankelize(acs, cfg)
    _, s, vh = np.linalg.svd(h, full_matrices=True)
    m = h.shape[1]
    sigma = np.zeros(m)
    sigma[: len(s)] = s
    smax = sigma[0] if sigma[0] > 0 else 1.0
    null_cols = sigma < rank_threshold * smax
    filters = vh.conj().T[:, null_cols]
    return AnnihilationFilter(
        filters=filters,
        rank_threshold=rank_threshold,
        window=cfg,
        empty=filters.shape[1] == 0,
    )


def slr_objective(
    z: np.ndarray,
    y: np.ndarray,
    mask: SamplingMask,
    filt: AnnihilationFilter,
    lam: float,
    z_prime: np.ndarray,
) -> float:
    """0.5 ||M z - y||^2 + ||H(z) N||_F^2 + lam ||z - z_prime||^2."""
    m = mask.mask.astype(np.float64)
    data = 0.5 * float(np.linalg.norm(m * z - y) ** 2)
    slr = 0.0
    if not filt.empty:
        slr = float(np.linalg.norm(hankelize(z, filt.window) @ filt.filters) ** 2)
    prox = lam * float(np.linalg.norm(z - z_prime) ** 2)
    return data + slr + prox


def slr_correct(
    z_prime: np.ndarray,
    y: np.ndarray,
    mask: SamplingMask,
    filt: AnnihilationFilter,
    lam: float = 1.0,
    cg_iters: int = 10,
    cg_tol: float = 1e-6,
    record: bool = False,
):
    """Minimize the proximal structured-low-rank objective by CG.

    Solves the normal equations of
    ``0.5 ||M z - y||^2 + ||H(z) N||_F^2 + lam ||z - z_prime||^2``
    starting from ``z_prime``; the objective never increases across CG
    iterations. Stops at relative residual ``cg_tol`` or after ``cg_iters``.

    With ``record=True`` returns ``(z, objectives)`` where ``objectives``
    re-evaluates the true objective at every iterate (for verification; it
    roughly doubles the cost).

    Raises :class:`NumericalError` if the residual grows for five
    consecutive iterations.
    """
    if lam < 0:
        raise NumericalError(f"lam must be >= 0, got {lam}")
    z_prime = np.asarray(z_prime, dtype=np.complex128)
    nc, ky, kx = z_prime.shape
    m = mask.mask.astype(np.float64)
    cfg = filt.window

    use_factors = None
    if not filt.empty:
        n_mat = filt.filters
        # Apply the smaller of N N^H (precomputed) or the two-factor product.
        if 2 * n_mat.shape[1] < n_mat.shape[0]:
            use_factors = ("split", n_mat)
        else:
            use_factors = ("gram", n_mat @ n_mat.conj().T)

    def normal_op(z: np.ndarray) -> np.ndarray:
        out = m * z + 2.0 * lam * z
        if use_factors is not None:
            h = hankelize(z, cfg)
            kind, w = use_factors
            hw = (h @ w) @ w.conj().T if kind == "split" else h @ w
            out += 2.0 * hankelize_adjoint(hw, nc, ky, kx, cfg)
        return out

    b = m * y + 2.0 * lam * z_prime
    x = z_prime.copy()
    r = b - normal_op(x)
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        b_norm = 1.0

    objectives = []
    if record:
        objectives.append(slr_objective(x, y, mask, filt, lam, z_prime))

    grow_count = 0
    prev_res = np.sqrt(rs)
    for _ in range(cg_iters):
        if np.sqrt(rs) / b_norm <= cg_tol:
            break
        ap = normal_op(p)
        denom = float(np.vdot(p, ap).real)
        if denom <= 0.0:
            break  # numerically semi-definite direction; nothing to gain
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.vdot(r, r).real)
        res = np.sqrt(rs_new)
        if res > prev_res:
            grow_count += 1
            if grow_count >= 5:
                raise NumericalError(
                    "conjugate gradients diverged: residual grew for "
                    "5 consecutive iterations"
                )
        else:
            grow_count = 0
        prev_res = res
        p = r + (rs_new / rs) * p
        rs = rs_new
        if record:
            objectives.append(slr_objective(x, y, mask, filt, lam, z_prime))

    if record:
        return x, objectives
    return x
