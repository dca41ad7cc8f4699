"""Command-line pipeline driver.

Subcommands generate phantoms and masks, run the forward attenuation
sequence, train the linear denoiser, reconstruct with the reverse sampler or
the classical baselines, and score results. Every error is reported as a
single JSON object on stderr; every generated artifact gets a JSON sidecar
echoing the seed and parameters that produced it.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import containers as ct
from .baselines import grappa_operator_extrapolate, grappa_operator_fit, pm_flow, zero_filled
from .config import RunConfig, load_config
from .core import (
    DiffusionSchedule,
    build_schedule,
    extract_acs,
    fft2c,
    ifft2c,
    smaps_multiply,
    tau_for_acs,
)
from .errors import AkdiffError, ConfigError, ContainerFormatError, DimensionError
from .forward import sample_perturbation
from .metrics import nmse, psnr, sos_combine, ssim
from .sampler import ReconConfig, reconstruct
from .score import DeltaOracle, GaussianPriorOracle, LinearDenoiser, train_linear_denoiser
from .simulate import make_gaussian_prior_set, make_mask, make_phantom
from .slr import AnnihilationFilter, HankelConfig, estimate_annihilation

__all__ = ["cli_run", "main"]


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as JSON on stderr."""

    def error(self, message: str) -> None:  # noqa: D401 - argparse contract
        _emit_error("usage", message)
        raise SystemExit(2)


def _emit_error(category: str, message: str) -> None:
    sys.stderr.write(ct.format_json({"error": category, "message": message}) + "\n")


def _save_png(path: str, magnitude: np.ndarray) -> None:
    from PIL import Image

    m = np.asarray(magnitude, dtype=np.float64)
    peak = float(m.max())
    if peak > 0:
        m = m / peak
    Image.fromarray(np.round(255.0 * m).astype(np.uint8), mode="L").save(path)


def _load_kspace(path: str) -> np.ndarray:
    arr, header = ct.read_container(path)
    if header["role"] not in ("kspace", "image"):
        raise ContainerFormatError(f"{path}: expected k-space data, got role {header['role']!r}")
    z = arr.astype(np.complex128)
    if not np.all(np.isfinite(z)):
        raise DimensionError(f"{path}: payload contains non-finite samples")
    return fft2c(z) if header["role"] == "image" else z


def _magnitude_image(path: str) -> np.ndarray:
    """Container -> sos magnitude image (k-space input is transformed)."""
    arr, header = ct.read_container(path)
    data = arr.astype(np.complex128) if header["dtype"] == "c64" else arr.astype(np.float64)
    if header["role"] == "kspace":
        data = ifft2c(data)
    if np.iscomplexobj(data):
        return sos_combine(data) if data.shape[0] > 1 else np.abs(data[0])
    return sos_combine(data) if data.shape[0] > 1 else data[0]


def _schedule_for(cfg: RunConfig, ky: int, kx: int, acs_extent: int | None) -> DiffusionSchedule:
    tau_n = cfg.tau_n
    if tau_n is None and acs_extent:
        tau_n = tau_for_acs(ky, acs_extent)
    return build_schedule(ky, kx, cfg.n_steps, cfg.sigma0, cfg.sigma_n, tau_n, cfg.gamma)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_phantom(args) -> int:
    os.makedirs(args.outdir, exist_ok=True)
    image, smaps = make_phantom(args.ky, args.kx, args.nc, args.seed)
    kspace = fft2c(smaps_multiply(image, smaps))
    meta = {"seed": args.seed, "ky": args.ky, "kx": args.kx, "nc": args.nc}
    img_path = os.path.join(args.outdir, "truth_image.bin")
    ct.write_container(img_path, image[None], "image")
    ct.write_sidecar(img_path, meta)
    sens_path = os.path.join(args.outdir, "sens.bin")
    ct.save_smaps(sens_path, smaps, meta)
    k_path = os.path.join(args.outdir, "kspace.bin")
    ct.write_container(k_path, kspace, "kspace")
    ct.write_sidecar(k_path, meta)
    if args.png:
        _save_png(os.path.join(args.outdir, "truth_image.png"), np.abs(image))
    print(ct.format_json({"outdir": args.outdir, "seed": args.seed}))
    return 0


def _cmd_mask(args) -> int:
    acs = args.acs_size if args.kind == "acs-only" else args.acs_lines
    mask = make_mask(args.kind, args.ky, args.kx, r=args.R, acs_lines=acs, seed=args.seed)
    meta = {
        "kind": args.kind,
        "R": args.R,
        "acs_lines": acs,
        "seed": args.seed,
        "ky": args.ky,
        "kx": args.kx,
        "n_acquired": int(mask.mask.sum()),
    }
    ct.save_mask(args.out, mask, meta)
    print(ct.format_json(meta))
    return 0


def _cmd_forward(args) -> int:
    cfg = load_config(args.config)
    z0 = _load_kspace(args.kspace)
    smaps = ct.load_smaps(args.sens)
    ky, kx = z0.shape[-2:]
    sched = _schedule_for(cfg, ky, kx, acs_extent=ky // 4 if cfg.tau_n is None else None)
    steps = sorted({int(s) for s in args.steps.split(",")})
    for s in steps:
        if not 0 <= s <= sched.n_steps:
            raise DimensionError(f"step {s} outside schedule [0, {sched.n_steps}]")
    os.makedirs(args.outdir, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for s in steps:
        z_s = sample_perturbation(z0, smaps, sched, s, rng)
        path = os.path.join(args.outdir, f"step_{s:03d}.bin")
        ct.write_container(path, z_s, "kspace")
        ct.write_sidecar(path, {"seed": args.seed, "step": s, "sigma": float(sched.sigma[s]), "tau": float(sched.tau[s])})
        _save_png(path[:-4] + "_kspace.png", np.log1p(sos_combine(z_s)))
        _save_png(path[:-4] + "_image.png", sos_combine(ifft2c(z_s)))
    print(ct.format_json({"outdir": args.outdir, "steps": steps, "seed": args.seed}))
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    rng = np.random.default_rng(cfg.seed)
    if args.inputs:
        z0s = [_load_kspace(p) for p in args.inputs]
        smaps = ct.load_smaps(args.sens) if args.sens else None
        if smaps is None:
            raise ConfigError("training on provided inputs requires --sens")
    else:
        z0s, smaps, _ = make_gaussian_prior_set(args.ky, args.kx, args.nc, args.samples, rng)
    ky, kx = z0s[0].shape[-2:]
    sched = _schedule_for(cfg, ky, kx, acs_extent=ky // 4)
    state = train_linear_denoiser(z0s, smaps, sched, lr=args.lr, iters=args.iters, rng=rng)
    ct.save_train_state(
        args.out,
        state,
        {"seed": cfg.seed, "lr": args.lr, "iters": args.iters, "n_samples": len(z0s)},
    )
    print(
        ct.format_json(
            {
                "out": args.out,
                "final_loss": float(state.loss_history[-1]),
                "iterations": state.iterations,
                "seed": cfg.seed,
            }
        )
    )
    return 0


def _build_model(args, cfg: RunConfig, smaps, sched):
    if args.model == "delta":
        if not args.truth:
            raise ConfigError("--model delta requires --truth")
        return DeltaOracle(_load_kspace(args.truth))
    if args.model == "gaussian":
        if not args.prior_var:
            raise ConfigError("--model gaussian requires --prior-var")
        var, _ = ct.read_container(args.prior_var)
        mean = None
        if args.prior_mean:
            mean_arr, _ = ct.read_container(args.prior_mean)
            mean = mean_arr[0].astype(np.complex128)
        return GaussianPriorOracle(mean, var[0].astype(np.float64), smaps, sched)
    if args.model == "linear":
        if not args.gains:
            raise ConfigError("--model linear requires --gains")
        state = ct.load_train_state(args.gains)
        if state.gains.shape[0] != sched.n_steps + 1:
            raise ConfigError(
                f"gains cover {state.gains.shape[0] - 1} steps, schedule has {sched.n_steps}"
            )
        return LinearDenoiser(state.gains)
    raise ConfigError(f"unknown model {args.model!r}")


def _recon_single(y, mask, smaps, filt, model, sched, cfg: RunConfig, seed: int):
    rcfg = ReconConfig(
        lam=cfg.lam,
        snr=cfg.snr,
        n_steps=cfg.n_steps,
        corrector_steps=cfg.corrector_steps,
        seed=seed,
        cg_iters=cfg.cg_iters,
        cg_tol=cfg.cg_tol,
    )
    return reconstruct(y, mask, smaps, filt, model, sched, rcfg)


def _cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    mask = ct.load_mask(args.mask)
    smaps = ct.load_smaps(args.sens)
    ky, kx = mask.mask.shape
    acs_extent = mask.acs.y1 - mask.acs.y0
    sched = _schedule_for(cfg, ky, kx, acs_extent)
    model = _build_model(args, cfg, smaps, sched)

    inputs = args.kspace
    if len(inputs) > 1 and not args.outdir:
        raise ConfigError("multiple inputs require --outdir")
    if len(inputs) == 1 and not (args.out or args.outdir):
        raise ConfigError("--out (or --outdir) is required")

    ys = []
    for path in inputs:
        y = _load_kspace(path)
        if y.shape[-2:] != (ky, kx):
            raise DimensionError(f"{path}: k-space {y.shape} does not match mask {(ky, kx)}")
        y = mask.mask * y  # enforce the zero-filled contract off-mask
        ys.append(y)

    filt: AnnihilationFilter | None = None
    if not args.no_slr:
        if args.filter:
            filt = ct.load_filter(args.filter)
        else:
            hcfg = HankelConfig(cfg.slr_wy, cfg.slr_wx)
            filt = estimate_annihilation(extract_acs(ys[0], mask), hcfg, cfg.rank_threshold)

    jobs = max(1, args.jobs)
    cap = os.environ.get("AKD_THREADS")
    if cap:
        jobs = max(1, min(jobs, int(cap)))

    results: list[np.ndarray] = [None] * len(ys)  # type: ignore[list-item]
    if jobs == 1 or len(ys) == 1:
        for idx, y in enumerate(ys):
            results[idx] = _recon_single(y, mask, smaps, filt, model, sched, cfg, cfg.seed + idx)
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(
                    _recon_single, y, mask, smaps, filt, model, sched, cfg, cfg.seed + idx
                ): idx
                for idx, y in enumerate(ys)
            }
            for fut, idx in futures.items():
                results[idx] = fut.result()

    out_paths = []
    for idx, out in enumerate(results):
        if len(ys) == 1 and args.out:
            path = args.out
        else:
            os.makedirs(args.outdir, exist_ok=True)
            stem = os.path.splitext(os.path.basename(inputs[idx]))[0]
            path = os.path.join(args.outdir, f"{stem}_recon_{idx:02d}.bin")
        ct.write_container(path, out, "kspace")
        ct.write_sidecar(
            path,
            {
                "seed": cfg.seed + idx,
                "model": args.model,
                "slr": filt is not None,
                "input": inputs[idx],
            },
        )
        if args.png:
            _save_png(path[:-4] + ".png", sos_combine(ifft2c(out)))
        out_paths.append(path)
    print(ct.format_json({"outputs": out_paths, "seed": cfg.seed}))
    return 0


def _cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    mask = ct.load_mask(args.mask)
    smaps = ct.load_smaps(args.sens)
    y = mask.mask * _load_kspace(args.kspace)
    meta = {"method": args.method, "input": args.kspace}
    if args.method == "zero-filled":
        img = zero_filled(y, mask, smaps)
        ct.write_container(args.out, img[None], "image")
    elif args.method == "pm":
        img = pm_flow(y, mask, smaps, lam=args.lam, step=args.step, iters=args.iters)
        meta.update({"lambda": args.lam, "step": args.step, "iters": args.iters})
        ct.write_container(args.out, img[None], "image")
    elif args.method == "grappa-op":
        acs = extract_acs(y, mask)
        filled = y.copy()
        ky = y.shape[-2]
        for shift in (1, -1):
            op = grappa_operator_fit(acs, axis=0, shift=shift)
            filled = grappa_operator_extrapolate(filled, op, ky)
        meta.update({"axis": 0})
        ct.write_container(args.out, filled, "kspace")
    else:
        raise ConfigError(f"unknown baseline {args.method!r}")
    ct.write_sidecar(args.out, meta)
    if args.png:
        _save_png(args.out[: args.out.rfind(".")] + ".png", _magnitude_image(args.out))
    print(ct.format_json({"out": args.out, "method": args.method}))
    return 0


def _cmd_metrics(args) -> int:
    ref = _magnitude_image(args.ref)
    test = _magnitude_image(args.test)
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: ref {ref.shape} vs test {test.shape}")
    report = {
        "nmse": nmse(ref, test),
        "psnr_db": psnr(ref, test),
        "ssim": ssim(ref, test),
    }
    text = ct.format_json(report)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    p = _Parser(prog="akdiff", description="Attenuated k-space diffusion pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="generate a synthetic phantom dataset")
    sp.add_argument("--ky", type=int, default=64)
    sp.add_argument("--kx", type=int, default=64)
    sp.add_argument("--nc", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--outdir", required=True)
    sp.add_argument("--png", action="store_true")
    sp.set_defaults(func=_cmd_phantom)

    sp = sub.add_parser("mask", help="generate a sampling mask")
    sp.add_argument("--kind", choices=("uniform", "random", "acs-only"), default="uniform")
    sp.add_argument("--ky", type=int, default=64)
    sp.add_argument("--kx", type=int, default=64)
    sp.add_argument("--R", type=int, default=6)
    sp.add_argument("--acs-lines", type=int, default=16)
    sp.add_argument("--acs-size", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_mask)

    sp = sub.add_parser("forward", help="emit the forward attenuation sequence")
    sp.add_argument("--kspace", required=True)
    sp.add_argument("--sens", required=True)
    sp.add_argument("--config")
    sp.add_argument("--steps", default="0,10,25,50")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--outdir", required=True)
    sp.set_defaults(func=_cmd_forward)

    sp = sub.add_parser("train", help="train the per-frequency linear denoiser")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--inputs", nargs="*", default=[])
    sp.add_argument("--sens")
    sp.add_argument("--samples", type=int, default=16)
    sp.add_argument("--ky", type=int, default=32)
    sp.add_argument("--kx", type=int, default=32)
    sp.add_argument("--nc", type=int, default=2)
    sp.add_argument("--lr", type=float, default=0.5)
    sp.add_argument("--iters", type=int, default=4000)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("reconstruct", help="reverse-diffusion reconstruction")
    sp.add_argument("--kspace", nargs="+", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--sens", required=True)
    sp.add_argument("--model", choices=("delta", "gaussian", "linear"), required=True)
    sp.add_argument("--truth")
    sp.add_argument("--gains")
    sp.add_argument("--prior-mean")
    sp.add_argument("--prior-var")
    sp.add_argument("--filter", help="precomputed annihilation filter container")
    sp.add_argument("--config")
    sp.add_argument("--no-slr", action="store_true")
    sp.add_argument("--out")
    sp.add_argument("--outdir")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--png", action="store_true")
    sp.set_defaults(func=_cmd_reconstruct)

    sp = sub.add_parser("baseline", help="classical baseline reconstructions")
    sp.add_argument("method", choices=("pm", "grappa-op", "zero-filled"))
    sp.add_argument("--kspace", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--sens", required=True)
    sp.add_argument("--config")
    sp.add_argument("--lam", type=float, default=0.005)
    sp.add_argument("--step", type=float, default=0.5)
    sp.add_argument("--iters", type=int, default=200)
    sp.add_argument("--out", required=True)
    sp.add_argument("--png", action="store_true")
    sp.set_defaults(func=_cmd_baseline)

    sp = sub.add_parser("metrics", help="score a reconstruction against a reference")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_metrics)

    return p


def cli_run(argv: list[str]) -> int:
    """Run one CLI command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except AkdiffError as exc:
        _emit_error(exc.category, str(exc))
        return 1
    except FileNotFoundError as exc:
        _emit_error("io", str(exc))
        return 1


def main() -> None:
    sys.exit(cli_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
