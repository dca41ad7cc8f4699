import numpy as np
import pytest

from akdiff.core import AcsRegion, SamplingMask
from akdiff.errors import CalibrationError, NumericalError
from akdiff.slr import (
    HANKEL_BACKEND,
    HankelConfig,
    estimate_annihilation,
    hankelize,
    hankelize_adjoint,
    slr_correct,
    slr_objective,
)


def _randc(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _line_mask(ky, kx, lines, acs):
    m = np.broadcast_to(lines[:, None], (ky, kx)).copy()
    return SamplingMask(mask=m, acs=acs)


def _exp_data(rng, nc=2, ky=16, kx=16, n_modes=2):
    """Separable few-exponential model: exactly annihilated by a small bank."""
    ay = np.exp(1j * rng.uniform(0, 2 * np.pi, n_modes))
    ax = np.exp(1j * rng.uniform(0, 2 * np.pi, n_modes))
    w = _randc(rng, (nc, n_modes))
    yy = np.arange(ky)[:, None, None]
    xx = np.arange(kx)[None, :, None]
    modes = (ay[None, None, :] ** yy) * (ax[None, None, :] ** xx)
    return np.einsum("cj,yxj->cyx", w, modes)


def test_backend_is_reported():
    assert HANKEL_BACKEND in ("numpy", "cython")


def test_hankel_1d_structure():
    z = np.array([1, 2, 3, 4], dtype=complex).reshape(1, 1, 4)
    h = hankelize(z, HankelConfig(1, 2))
    assert np.array_equal(h, np.array([[1, 2], [2, 3], [3, 4]], dtype=complex))


def test_hankel_constant_signal_rank_one(rng):
    z = np.full((1, 8, 8), 2.0 + 1.0j)
    h = hankelize(z, HankelConfig(3, 3))
    assert np.linalg.matrix_rank(h) == 1


def test_hankel_adjoint_identity(rng):
    cfg = HankelConfig(3, 4)
    for _ in range(20):
        z = _randc(rng, (2, 10, 12))
        h = hankelize(z, cfg)
        ymat = _randc(rng, h.shape)
        lhs = np.vdot(hankelize(z, cfg), ymat)
        rhs = np.vdot(z, hankelize_adjoint(ymat, 2, 10, 12, cfg))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_hankel_window_too_large(rng):
    z = _randc(rng, (1, 4, 4))
    with pytest.raises(CalibrationError):
        hankelize(z, HankelConfig(5, 2))


def test_annihilation_exponential_filter():
    alpha = np.exp(1j * 0.7)
    z = (alpha ** np.arange(16)).reshape(1, 1, 16)
    filt = estimate_annihilation(z, HankelConfig(1, 2), 0.05)
    assert filt.n_filters == 1
    resid = np.linalg.norm(hankelize(z, filt.window) @ filt.filters)
    assert resid <= 1e-10
    v = filt.filters[:, 0]
    assert abs(v[0] / v[1] + alpha) < 1e-10  # proportional to [-alpha, 1]


def test_annihilation_white_noise_empty(rng):
    wn = _randc(rng, (1, 12, 12))
    filt = estimate_annihilation(wn, HankelConfig(3, 3), 0.05)
    assert filt.empty and filt.n_filters == 0


def test_annihilation_two_coil_ratio(rng):
    c = 0.5 + 0.3j
    z1 = _randc(rng, (8, 8))
    z = np.stack([z1, c * z1])
    filt = estimate_annihilation(z, HankelConfig(1, 1), 0.05)
    assert filt.n_filters == 1
    v = filt.filters[:, 0]
    # Nullspace of columns (z1, c z1): x + c y = 0.
    assert abs(v[0] / v[1] + c) < 1e-10
    assert abs(np.linalg.norm(v) - 1.0) < 1e-10


def test_annihilation_columns_orthonormal(rng):
    z = _exp_data(rng, nc=2, ky=12, kx=12, n_modes=2)
    filt = estimate_annihilation(z, HankelConfig(3, 3), 0.05)
    assert filt.n_filters >= 1
    gram = filt.filters.conj().T @ filt.filters
    assert np.max(np.abs(gram - np.eye(filt.n_filters))) < 1e-10


def test_annihilation_acs_too_small(rng):
    with pytest.raises(CalibrationError):
        estimate_annihilation(_randc(rng, (1, 2, 2)), HankelConfig(3, 3), 0.05)


def test_slr_large_lambda_returns_prox_center(rng):
    z0 = _exp_data(rng, ky=16, kx=16)
    lines = np.ones(16, dtype=np.uint8)
    mask = _line_mask(16, 16, lines, AcsRegion(6, 10, 0, 16))
    filt = estimate_annihilation(z0[:, 6:10, :], HankelConfig(2, 2), 0.05)
    zp = _randc(rng, z0.shape)
    out = slr_correct(zp, mask.mask * z0, mask, filt, lam=1e8, cg_iters=50, cg_tol=1e-12)
    assert np.linalg.norm(out - zp) / np.linalg.norm(zp) <= 1e-4


def test_slr_empty_filter_full_mask_recovers_data(rng):
    z0 = _randc(rng, (2, 8, 8))
    lines = np.ones(8, dtype=np.uint8)
    mask = _line_mask(8, 8, lines, AcsRegion(3, 5, 0, 8))
    filt = estimate_annihilation(_randc(rng, (2, 4, 8)), HankelConfig(2, 2), 0.05)
    assert filt.empty
    zp = _randc(rng, z0.shape)
    out = slr_correct(zp, z0, mask, filt, lam=0.0, cg_iters=20, cg_tol=1e-14)
    assert np.max(np.abs(out - z0)) < 1e-12


def test_slr_matches_dense_solve(rng):
    # Independent oracle: assemble the normal operator column by column and
    # solve directly; CG must land on the same minimizer.
    nc, ky, kx = 2, 16, 16
    z0 = _exp_data(rng, nc=nc, ky=ky, kx=kx)
    lines = (rng.random(ky) < 0.5).astype(np.uint8)
    lines[6:10] = 1
    mask = _line_mask(ky, kx, lines, AcsRegion(6, 10, 0, kx))
    y = mask.mask * z0
    cfg = HankelConfig(3, 3)
    filt = estimate_annihilation(z0[:, 6:10, :], cfg, 0.05)
    lam = 0.5
    zp = _randc(rng, z0.shape)

    n = nc * ky * kx
    a_mat = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    gram = filt.filters @ filt.filters.conj().T
    for j in range(n):
        z = eye[:, j].reshape(nc, ky, kx)
        col = mask.mask * z + 2.0 * lam * z
        col = col + 2.0 * hankelize_adjoint(hankelize(z, cfg) @ gram, nc, ky, kx, cfg)
        a_mat[:, j] = col.ravel()
    b = (mask.mask * y + 2.0 * lam * zp).ravel()
    dense = np.linalg.solve(a_mat, b).reshape(nc, ky, kx)

    out = slr_correct(zp, y, mask, filt, lam=lam, cg_iters=300, cg_tol=1e-13)
    assert np.linalg.norm(out - dense) / np.linalg.norm(dense) <= 1e-6


def test_slr_exact_filters_recover_truth(rng):
    # Data-consistency pull: with exact annihilation and enough samples the
    # minimizer at vanishing lambda is the ground truth.
    z0 = _exp_data(rng, nc=2, ky=16, kx=16)
    lines = (rng.random(16) < 0.5).astype(np.uint8)
    lines[6:10] = 1
    mask = _line_mask(16, 16, lines, AcsRegion(6, 10, 0, 16))
    y = mask.mask * z0
    filt = estimate_annihilation(z0[:, 6:10, :], HankelConfig(3, 3), 0.05)
    out = slr_correct(
        np.zeros_like(z0), y, mask, filt, lam=1e-9, cg_iters=400, cg_tol=1e-13
    )
    assert np.linalg.norm(out - z0) / np.linalg.norm(z0) <= 1e-6


def test_slr_objective_monotone(rng):
    z0 = _exp_data(rng, nc=2, ky=16, kx=16)
    lines = (rng.random(16) < 0.6).astype(np.uint8)
    lines[6:10] = 1
    mask = _line_mask(16, 16, lines, AcsRegion(6, 10, 0, 16))
    y = mask.mask * z0
    filt = estimate_annihilation(z0[:, 6:10, :], HankelConfig(3, 3), 0.05)
    zp = z0 + 0.3 * _randc(rng, z0.shape)
    out, objs = slr_correct(zp, y, mask, filt, lam=0.7, cg_iters=10, cg_tol=0.0, record=True)
    objs = np.asarray(objs)
    assert np.all(np.diff(objs) <= 1e-12 * objs[0])
    assert objs[-1] <= slr_objective(zp, y, mask, filt, 0.7, zp)


def test_slr_negative_lambda_rejected(rng):
    z0 = _randc(rng, (1, 8, 8))
    lines = np.ones(8, dtype=np.uint8)
    mask = _line_mask(8, 8, lines, AcsRegion(3, 5, 0, 8))
    filt = estimate_annihilation(z0[:, 3:5, :], HankelConfig(2, 2), 0.5)
    with pytest.raises(NumericalError):
        slr_correct(z0, z0, mask, filt, lam=-1.0)
