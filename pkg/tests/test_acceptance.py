"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime against the stated budget.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""
import os
import time

import numpy as np
import pytest

from akdiff.cli import cli_run
from akdiff.containers import read_container, read_sidecar
from akdiff.core import (
    build_schedule,
    coil_combine,
    coil_project,
    complex_noise,
    extract_acs,
    fft2c,
    ifft2c,
    smaps_multiply,
    tau_for_acs,
)
from akdiff.forward import convolution_equivalence, heat_residual
from akdiff.metrics import nmse, psnr, sos_combine, ssim
from akdiff.baselines import grappa_operator_fit, pm_flow, zero_filled
from akdiff.sampler import ReconConfig, reconstruct
from akdiff.score import (
    DeltaOracle,
    LinearDenoiser,
    dsm_loss,
    gradient_check,
    score_from_denoiser,
    train_linear_denoiser,
)
from akdiff.simulate import make_gaussian_prior_set, make_mask, make_phantom
from akdiff.slr import (
    HankelConfig,
    estimate_annihilation,
    hankelize,
    hankelize_adjoint,
    slr_correct,
    slr_objective,
)


class _Timer:
    def __init__(self, number, name, budget_s):
        self.number = number
        self.name = name
        self.budget = budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        print(f"\n[acceptance] criterion {self.number} ({self.name}): "
              f"{status} ({elapsed:.1f}s < {self.budget:.0f}s budget)")
        assert elapsed < self.budget, f"criterion {self.number} exceeded budget"


def _randc(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_criterion_01_heat_and_convolution_identities():
    with _Timer(1, "heat/convolution identities", 5.0):
        rng = np.random.default_rng(101)
        sched = build_schedule(32, 32, 8, 0.01, 1.0, tau_for_acs(32, 8), 2.0)
        for k in range(100):
            z = _randc(rng, (1, 32, 32))
            i = int(rng.integers(0, sched.n_steps + 1))
            assert convolution_equivalence(z, sched, i) <= 1e-10
            ta, tb = rng.uniform(0.0, sched.tau[-1], size=2)
            gap = np.max(np.abs(sched.ghat_at(ta) * sched.ghat_at(tb) - sched.ghat_at(ta + tb)))
            assert gap <= 1e-12


def test_criterion_02_heat_ode_certification():
    with _Timer(2, "heat ODE certification", 5.0):
        rng = np.random.default_rng(202)
        sched = build_schedule(32, 32, 10, 0.01, 1.0, tau_for_acs(32, 8), 2.0)
        z0 = _randc(rng, (2, 32, 32))
        for i in (2, 5, 8):
            assert heat_residual(z0, sched, i, 1e-4 * sched.tau[i]) <= 1e-6
        i = 5
        r1 = heat_residual(z0, sched, i, 1e-3 * sched.tau[i])
        r2 = heat_residual(z0, sched, i, 0.5e-3 * sched.tau[i])
        assert 3.5 <= r1 / r2 <= 4.5


def test_criterion_03_perturbation_kernel_moments():
    with _Timer(3, "perturbation kernel moments", 60.0):
        image, smaps = make_phantom(32, 32, 2, seed=7)
        z0 = fft2c(smaps_multiply(image, smaps))
        sched = build_schedule(32, 32, 10, 0.01, 1.0, tau_for_acs(32, 8), 2.0)
        n = sched.n_steps
        draws = 10_000
        rng = np.random.default_rng(303)
        mean_acc = np.zeros_like(z0)
        amp = np.sqrt(sched.sigma[n] ** 2 - sched.sigma[0] ** 2)
        chunk = 500
        for _ in range(draws // chunk):
            noise = complex_noise(rng, (chunk, *z0.shape))
            proj = coil_project(noise, smaps)
            # Every injected noise draw stays in the projection range.
            assert np.max(np.abs(coil_project(proj, smaps) - proj)) <= 1e-10
            mean_acc += np.sum(sched.ghat[n] * z0 + amp * proj, axis=0)
        mean = mean_acc / draws
        bound = 4.0 * sched.sigma[n] / np.sqrt(draws)
        per_entry = np.abs(mean - sched.ghat[n] * z0)
        assert np.max(per_entry) <= np.sqrt(2.0) * bound  # complex modulus of two bounded parts


def test_criterion_04_score_loss_consistency():
    with _Timer(4, "score/loss consistency", 30.0):
        image, smaps = make_phantom(64, 64, 2, seed=4)
        z0 = fft2c(smaps_multiply(image, smaps))
        sched = build_schedule(64, 64, 8, 0.01, 1.0, tau_for_acs(64, 16), 2.0)
        rng = np.random.default_rng(404)
        model = DeltaOracle(z0)
        for i in range(1, sched.n_steps + 1):
            assert dsm_loss(model, z0, smaps, sched, i, rng) == 0.0
        from akdiff.forward import sample_perturbation

        for i in (1, 4, 8):
            z_i = sample_perturbation(z0, smaps, sched, i, rng)
            h = _randc(rng, z0.shape)
            score = score_from_denoiser(h, z_i, smaps, sched, i)
            lhs = sched.sigma[i] ** 2 * np.linalg.norm(coil_project(score, smaps))
            rhs = np.linalg.norm(coil_project(sched.ghat[i] * h - z_i, smaps))
            assert abs(lhs - rhs) <= 1e-12 * max(rhs, 1.0)
        lin = LinearDenoiser.zeros(sched)
        lin.gains[4] = 0.5 * _randc(np.random.default_rng(31), (64, 64))
        assert gradient_check(lin, z0, smaps, sched, 4, np.random.default_rng(11)) <= 1e-5


def test_criterion_05_training_oracle():
    with _Timer(5, "training oracle", 120.0):
        rng = np.random.default_rng(42)
        z0s, smaps, _ = make_gaussian_prior_set(32, 32, 2, 16, rng)
        sched = build_schedule(32, 32, 4, 0.25, 0.5, 1.2, 1.0)
        state = train_linear_denoiser(
            z0s, smaps, sched, lr=0.5, iters=4000, rng=np.random.default_rng(5)
        )
        # Closed-form per-frequency optimum, computed independently.
        a = np.stack([coil_combine(z, smaps) for z in z0s])
        vhat = np.mean(np.abs(a) ** 2, axis=0)
        for i in range(1, sched.n_steps + 1):
            g = sched.ghat[i]
            beta2 = sched.sigma[i] ** 2 - sched.sigma[0] ** 2
            g_star = vhat * g / (vhat * g**2 + 2.0 * beta2)
            rel = np.linalg.norm(state.gains[i] - g_star) / np.linalg.norm(g_star)
            assert rel <= 1e-3, f"step {i}: relative gap {rel:.2e}"
        # Monotone trend over non-overlapping 10-iteration windows: upward
        # wiggles must stay within 1% of the total descent.
        h = state.loss_history
        w = h[: len(h) // 10 * 10].reshape(-1, 10).mean(axis=1)
        ups = float(np.maximum(0.0, np.diff(w)).sum())
        descent = float(w[0] - w.min())
        assert descent > 0 and ups <= 0.01 * descent


def test_criterion_06_slr_machinery():
    with _Timer(6, "structured-low-rank machinery", 30.0):
        rng = np.random.default_rng(606)
        cfg = HankelConfig(3, 3)
        for _ in range(20):
            z = _randc(rng, (2, 12, 12))
            h = hankelize(z, cfg)
            ymat = _randc(rng, h.shape)
            gap = abs(np.vdot(hankelize(z, cfg), ymat) - np.vdot(z, hankelize_adjoint(ymat, 2, 12, 12, cfg)))
            assert gap <= 1e-12 * max(1.0, abs(np.vdot(h, ymat)))

        alpha = np.exp(1j * 0.7)
        zexp = (alpha ** np.arange(16)).reshape(1, 1, 16)
        filt1 = estimate_annihilation(zexp, HankelConfig(1, 2), 0.05)
        assert np.linalg.norm(hankelize(zexp, filt1.window) @ filt1.filters) <= 1e-10

        from akdiff.core import AcsRegion, SamplingMask

        nc, ky, kx = 2, 16, 16
        ay = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        ax = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
        wmix = _randc(rng, (nc, 2))
        yy = np.arange(ky)[:, None, None]
        xx = np.arange(kx)[None, :, None]
        z0 = np.einsum("cj,yxj->cyx", wmix, (ay ** yy) * (ax ** xx))
        lines = (rng.random(ky) < 0.5).astype(np.uint8)
        lines[6:10] = 1
        mask = SamplingMask(
            mask=np.broadcast_to(lines[:, None], (ky, kx)).copy(),
            acs=AcsRegion(6, 10, 0, kx),
        )
        y = mask.mask * z0
        scfg = HankelConfig(3, 3)
        filt = estimate_annihilation(z0[:, 6:10, :], scfg, 0.05)
        lam = 0.5
        zp = _randc(rng, z0.shape)
        n = nc * ky * kx
        gram = filt.filters @ filt.filters.conj().T
        a_mat = np.zeros((n, n), dtype=complex)
        eye = np.eye(n)
        for j in range(n):
            zj = eye[:, j].reshape(nc, ky, kx)
            col = mask.mask * zj + 2.0 * lam * zj
            col = col + 2.0 * hankelize_adjoint(hankelize(zj, scfg) @ gram, nc, ky, kx, scfg)
            a_mat[:, j] = col.ravel()
        dense = np.linalg.solve(a_mat, (mask.mask * y + 2.0 * lam * zp).ravel()).reshape(nc, ky, kx)
        out = slr_correct(zp, y, mask, filt, lam=lam, cg_iters=300, cg_tol=1e-13)
        assert np.linalg.norm(out - dense) / np.linalg.norm(dense) <= 1e-6

        out2, objs = slr_correct(zp, y, mask, filt, lam=lam, cg_iters=10, cg_tol=0.0, record=True)
        objs = np.asarray(objs)
        assert np.all(np.diff(objs) <= 1e-12 * objs[0])
        assert objs[-1] <= slr_objective(zp, y, mask, filt, lam, zp)


def test_criterion_07_exact_inversion_telescope(phantom64, sched64):
    with _Timer(7, "exact-inversion telescope", 5.0):
        _, smaps, z0 = phantom64
        mask = make_mask("uniform", 64, 64, r=1, acs_lines=16)
        cfg = ReconConfig(
            lam=1.0, snr=0.16, n_steps=50, corrector_steps=0, seed=0,
            zero_noise=True, record_every=1,
        )
        res = reconstruct(z0, mask, smaps, None, DeltaOracle(z0), sched64, cfg, return_info=True)
        for i, state in res.trajectory:
            assert np.max(np.abs(state - sched64.ghat[i] * z0)) <= 1e-12 * np.max(np.abs(z0))
        assert np.max(np.abs(res.kspace - z0)) <= 1e-12 * np.max(np.abs(z0))


def test_criterion_08_end_to_end_oracle(phantom64, sched64, mask6x):
    with _Timer(8, "end-to-end oracle reconstruction", 60.0):
        image, smaps, z0 = phantom64
        y = mask6x.mask * z0
        filt = estimate_annihilation(extract_acs(y, mask6x), HankelConfig(6, 6), 0.05)
        cfg = ReconConfig(lam=1.0, snr=0.16, n_steps=50, corrector_steps=1, seed=7)
        out = reconstruct(y, mask6x, smaps, filt, DeltaOracle(z0), sched64, cfg)
        out_again = reconstruct(y, mask6x, smaps, filt, DeltaOracle(z0), sched64, cfg)
        assert np.array_equal(out, out_again)
        ref = sos_combine(ifft2c(z0))
        rec_nmse = nmse(ref, sos_combine(ifft2c(out)))
        zf = zero_filled(y, mask6x, smaps)
        zf_nmse = nmse(ref, np.abs(zf))
        print(f"\n[acceptance]   NMSE {rec_nmse:.3e} vs zero-filled {zf_nmse:.3e}")
        assert rec_nmse < 1e-3
        assert rec_nmse <= 0.5 * zf_nmse


def test_criterion_09_super_resolution_mode(phantom64):
    with _Timer(9, "super-resolution mode", 60.0):
        image, smaps, z0 = phantom64
        mask = make_mask("acs-only", 64, 64, acs_lines=32)
        y = mask.mask * z0
        sched = build_schedule(64, 64, 50, 0.01, 1.0, tau_for_acs(64, 32), 2.0)
        filt = estimate_annihilation(extract_acs(y, mask), HankelConfig(6, 6), 0.05)
        cfg = ReconConfig(lam=1.0, snr=0.16, n_steps=50, corrector_steps=1, seed=21)
        out = reconstruct(y, mask, smaps, filt, DeltaOracle(z0), sched, cfg)
        outside = (1 - mask.mask).astype(bool)
        err_recon = np.linalg.norm((out - z0)[:, outside])
        err_zf = np.linalg.norm((y - z0)[:, outside])
        print(f"\n[acceptance]   out-of-band error {err_recon:.3f} vs zero-filled {err_zf:.3f}")
        assert err_recon < err_zf


def test_criterion_10_baseline_sanity(phantom64):
    with _Timer(10, "baseline sanity", 60.0):
        image, smaps, z0 = phantom64
        mask = make_mask("uniform", 64, 64, r=3, acs_lines=12)
        y = mask.mask * z0
        x = pm_flow(y, mask, smaps, lam=0.005, step=0.5, iters=200)
        zf = zero_filled(y, mask, smaps)
        ref = np.abs(image)
        assert nmse(ref, np.abs(x)) < nmse(ref, np.abs(zf))

        alpha, beta = np.exp(1j * 0.4), np.exp(1j * 1.1)
        zexp = np.stack(
            [
                np.broadcast_to(alpha ** np.arange(16), (8, 16)),
                np.broadcast_to(beta ** np.arange(16), (8, 16)),
            ]
        ).astype(complex)
        op = grappa_operator_fit(zexp, axis=1, shift=1)
        assert np.max(np.abs(op.k - np.diag([alpha, beta]))) <= 1e-10


def test_criterion_11_metrics_identities():
    with _Timer(11, "metrics identities", 5.0):
        rng = np.random.default_rng(111)
        ref = np.abs(rng.standard_normal((32, 32))) + 0.2
        assert nmse(ref, ref) == 0.0
        assert ssim(ref, ref) == 1.0
        peak_ref = np.zeros((10, 10))
        peak_ref[0, 0] = 1.0
        assert psnr(peak_ref, peak_ref + np.sqrt(1e-3)) == pytest.approx(30.0, abs=1e-9)
        test = np.abs(rng.standard_normal((32, 32)))
        for c in (3.0, 0.02):
            assert abs(nmse(ref, test) - nmse(c * ref, c * test)) <= 1e-12


def test_criterion_12_format_and_cli(tmp_path, capsys):
    with _Timer(12, "format and CLI stability", 5.0):
        rng = np.random.default_rng(112)
        # bit-identical round trips for every dtype
        from akdiff.containers import write_container

        cases = [
            ((rng.standard_normal((2, 6, 5)) + 1j * rng.standard_normal((2, 6, 5))).astype(np.complex64), "kspace"),
            (rng.standard_normal((1, 6, 5)).astype(np.float32), "image"),
            ((rng.random((1, 6, 5)) < 0.5).astype(np.uint8), "mask"),
        ]
        for idx, (arr, role) in enumerate(cases):
            p = str(tmp_path / f"c{idx}.bin")
            write_container(p, arr, role)
            back, _ = read_container(p)
            assert np.array_equal(back.view(np.uint8), arr.view(np.uint8))
            p2 = str(tmp_path / f"c{idx}b.bin")
            write_container(p2, back, role)
            assert open(p, "rb").read() == open(p2, "rb").read()

        # seeded generators are reproducible through the CLI
        d1, d2 = str(tmp_path / "g1"), str(tmp_path / "g2")
        for d in (d1, d2):
            assert cli_run(["phantom", "--ky", "32", "--kx", "32", "--nc", "2",
                            "--seed", "9", "--outdir", d]) == 0
        capsys.readouterr()
        for name in ("truth_image.bin", "sens.bin", "kspace.bin"):
            assert open(os.path.join(d1, name), "rb").read() == open(os.path.join(d2, name), "rb").read()
        assert read_sidecar(os.path.join(d1, "kspace.bin"))["seed"] == 9

        m1, m2 = str(tmp_path / "m1.bin"), str(tmp_path / "m2.bin")
        margs = ["mask", "--kind", "random", "--ky", "32", "--kx", "32", "--R", "4",
                 "--acs-lines", "8", "--seed", "13"]
        cli_run(margs + ["--out", m1])
        cli_run(margs + ["--out", m2])
        capsys.readouterr()
        assert open(m1, "rb").read() == open(m2, "rb").read()

        # metrics JSON byte-stable
        img = os.path.join(d1, "truth_image.bin")
        assert cli_run(["metrics", "--ref", img, "--test", img]) == 0
        out1 = capsys.readouterr().out
        cli_run(["metrics", "--ref", img, "--test", img])
        out2 = capsys.readouterr().out
        assert out1 == out2
        assert out1.strip() == '{"nmse":0.0,"psnr_db":"inf","ssim":1.0}'
