"""Reverse attenuated diffusion sampling: predictor steps that invert the
attenuation, a structured-low-rank correction of each denoiser projection,
and Langevin corrector refinements. One reconstruction is a strictly
sequential chain; parallelism belongs across independent reconstructions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiffusionSchedule, SamplingMask, coil_project, complex_noise
from .errors import AkdiffError, DimensionError, NumericalError, StepIndexError
from .score import ScoreModel, score_from_denoiser
from .slr import AnnihilationFilter, slr_correct

__all__ = [
    "ReconConfig",
    "ReconResult",
    "initialize",
    "predictor_step",
    "corrector_step",
    "reconstruct",
]


@dataclass
class ReconConfig:
    """Knobs of the reverse sampling loop.

    ``lam`` weights the proximal term of the per-step consistency solve;
    ``snr`` scales the corrector step (the signal-to-noise ratio ``r``);
    ``corrector_steps`` is the number of Langevin refinements per step.
    ``zero_noise`` suppresses every stochastic injection (testing hook:
    with an exact denoiser the predictor chain then inverts the attenuation
    identically). ``record_every > 0`` stores every k-th iterate.
    """

    lam: float = 1.0
    snr: float = 0.16
    n_steps: int = 50
    corrector_steps: int = 1
    seed: int = 0
    cg_iters: int = 10
    cg_tol: float = 1e-6
    zero_noise: bool = False
    record_every: int = 0

    def validate(self, sched: DiffusionSchedule) -> None:
        if self.n_steps < 1:
            raise DimensionError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_steps != sched.n_steps:
            raise DimensionError(
                f"config n_steps {self.n_steps} != schedule n_steps {sched.n_steps}"
            )
        if self.corrector_steps < 0:
            raise DimensionError(f"corrector_steps must be >= 0, got {self.corrector_steps}")
        if self.snr <= 0:
            raise DimensionError(f"snr must be positive, got {self.snr}")
        if self.lam < 0:
            raise DimensionError(f"lam must be >= 0, got {self.lam}")


@dataclass
class ReconResult:
    kspace: np.ndarray
    trajectory: list  # [(step index, kspace copy), ...] when recording
    corrector_skips: int = 0


def _noise(rng: np.random.Generator, shape, zero: bool) -> np.ndarray:
    if zero:
        return np.zeros(shape, dtype=np.complex128)
    return complex_noise(rng, shape)


def initialize(
    y: np.ndarray,
    smaps: np.ndarray,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    zero_noise: bool = False,
) -> np.ndarray:
    """Draw the terminal state: ``ghat[N] * y + sigma_N * P n``."""
    n = sched.n_steps
    noise = _noise(rng, y.shape, zero_noise)
    state = sched.ghat[n] * y
    if sched.sigma[n] != 0.0 and not zero_noise:
        state = state + sched.sigma[n] * coil_project(noise, smaps)
    return state


def predictor_step(
    z_next: np.ndarray,
    z0_corr: np.ndarray,
    model: ScoreModel,
    smaps: np.ndarray,
    sched: DiffusionSchedule,
    i: int,
    rng: np.random.Generator,
    zero_noise: bool = False,
    h_next: np.ndarray | None = None,
) -> np.ndarray:
    """One reverse step from ``z_{i+1}`` to ``z_i``.

    Drift removes the attenuation increment of the corrected projection
    ``z0_corr`` and adds the score drift; the stochastic term re-injects
    projected noise at the step's variance increment. ``h_next`` reuses an
    already-computed ``model.denoise(z_next, i+1)``.
    """
    if not 0 <= i < sched.n_steps:
        raise StepIndexError(f"predictor target index {i} outside [0, {sched.n_steps - 1}]")
    if h_next is None:
        h_next = model.denoise(z_next, i + 1)
    eps = score_from_denoiser(h_next, z_next, smaps, sched, i + 1)
    dsig2 = float(sched.sigma[i + 1] ** 2 - sched.sigma[i] ** 2)
    drift = (sched.ghat[i + 1] - sched.ghat[i]) * z0_corr
    state = z_next - drift + dsig2 * coil_project(eps, smaps)
    if dsig2 > 0 and not zero_noise:
        noise = complex_noise(rng, z_next.shape)
        state = state + np.sqrt(dsig2) * coil_project(noise, smaps)
    return state


def _corrector_update(
    z: np.ndarray,
    g: np.ndarray,
    noise: np.ndarray,
    smaps: np.ndarray,
    snr: float,
) -> np.ndarray:
    """Langevin refinement with step size set by the noise/score norm ratio."""
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return z  # exact fixed point; stepping would divide by zero
    n_norm = float(np.linalg.norm(noise))
    eta = 2.0 * (snr * n_norm / g_norm) ** 2
    return z + eta * coil_project(g, smaps) + np.sqrt(2.0 * eta) * coil_project(noise, smaps)


def corrector_step(
    z_i: np.ndarray,
    model: ScoreModel,
    smaps: np.ndarray,
    sched: DiffusionSchedule,
    i: int,
    snr: float,
    rng: np.random.Generator,
    zero_noise: bool = False,
) -> tuple[np.ndarray, bool]:
    """One Langevin corrector update at step ``i``.

    Returns ``(state, stepped)``; ``stepped`` is False when the score
    vanished and the update was skipped (the state is already a fixed
    point). Norms are taken over the full flattened complex tensor.
    """
    sched.check_step(i)
    noise = _noise(rng, z_i.shape, zero_noise)
    h = model.denoise(z_i, i)
    g = score_from_denoiser(h, z_i, smaps, sched, i)
    if float(np.linalg.norm(g)) == 0.0:
        return z_i, False
    return _corrector_update(z_i, g, noise, smaps, snr), True


def reconstruct(
    y: np.ndarray,
    mask: SamplingMask,
    smaps: np.ndarray,
    filt: AnnihilationFilter | None,
    model: ScoreModel,
    sched: DiffusionSchedule,
    cfg: ReconConfig,
    return_info: bool = False,
):
    """Full reverse-diffusion reconstruction of masked k-space ``y``.

    Runs the terminal initialization, then for i = N-1 .. 0: the denoiser
    projection of the current state, its data-consistency / structured-
    low-rank correction (skipped when ``filt`` is None), the predictor
    step, and ``corrector_steps`` Langevin refinements. Deterministic for a
    fixed seed. Returns the final k-space, or a :class:`ReconResult` when
    ``return_info`` is set.
    """
    cfg.validate(sched)
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim != 3:
        raise DimensionError(f"expected (nc, ky, kx) measurements, got {y.shape}")
    off_mask = y * (1 - mask.mask)
    if off_mask.any():
        raise DimensionError("measurements must be zero-filled outside the mask")

    rng = np.random.default_rng(cfg.seed)
    state = initialize(y, smaps, sched, rng, zero_noise=cfg.zero_noise)
    trajectory: list = []
    skips = 0

    for i in range(sched.n_steps - 1, -1, -1):
        try:
            h_next = model.denoise(state, i + 1)
            if filt is not None:
                z0_corr = slr_correct(
                    h_next, y, mask, filt,
                    lam=cfg.lam, cg_iters=cfg.cg_iters, cg_tol=cfg.cg_tol,
                )
            else:
                z0_corr = h_next
            state = predictor_step(
                state, z0_corr, model, smaps, sched, i, rng,
                zero_noise=cfg.zero_noise, h_next=h_next,
            )
            for _ in range(cfg.corrector_steps):
                state, stepped = corrector_step(
                    state, model, smaps, sched, i, cfg.snr, rng,
                    zero_noise=cfg.zero_noise,
                )
                if not stepped:
                    skips += 1
        except AkdiffError as exc:
            raise type(exc)(f"step {i}: {exc}") from exc
        if not np.all(np.isfinite(state)):
            raise NumericalError(f"non-finite state at step {i}")
        if cfg.record_every > 0 and i % cfg.record_every == 0:
            trajectory.append((i, state.copy()))

    if return_info:
        return ReconResult(kspace=state, trajectory=trajectory, corrector_skips=skips)
    return state
