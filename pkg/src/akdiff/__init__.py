"""Attenuated k-space diffusion for multi-coil MRI k-space interpolation.

Models the loss of high-frequency k-space content as a heat-like Gaussian
attenuation, pairs it with coil-shaped noise to form a forward diffusion,
and inverts it with predictor-corrector sampling whose per-step projections
are corrected by a structured-low-rank consistency solve. Classical
approximations of the same inversion (image-domain diffusion flow,
coil-operator extrapolation) ship as baselines.
"""
from .baselines import (
    GrappaOperator,
    grappa_operator_extrapolate,
    grappa_operator_fit,
    pm_flow,
    zero_filled,
)
from .core import (
    AcsRegion,
    DiffusionSchedule,
    SamplingMask,
    build_schedule,
    coil_combine,
    coil_expand,
    coil_project,
    complex_noise,
    extract_acs,
    fft2c,
    freq_sq_grid,
    ifft2c,
    smaps_combine,
    smaps_multiply,
    tau_for_acs,
)
from .forward import attenuate, convolution_equivalence, heat_residual, sample_perturbation
from .metrics import nmse, psnr, sos_combine, ssim
from .sampler import ReconConfig, corrector_step, initialize, predictor_step, reconstruct
from .score import (
    DeltaOracle,
    GaussianPriorOracle,
    LinearDenoiser,
    ScoreModel,
    TrainState,
    dsm_loss,
    gradient_check,
    score_from_denoiser,
    train_linear_denoiser,
)
from .simulate import make_gaussian_prior_set, make_mask, make_phantom
from .slr import (
    HANKEL_BACKEND,
    AnnihilationFilter,
    HankelConfig,
    estimate_annihilation,
    hankelize,
    hankelize_adjoint,
    slr_correct,
    slr_objective,
)

__version__ = "0.1.0"
