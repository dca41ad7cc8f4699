"""Run configuration: JSON document validated against the preconditions of
the schedule, sampler, and solver before any compute starts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "parse_config"]

_DEFAULTS = {
    "schedule": {"N": 50, "sigma0": 0.01, "sigmaN": 1.0, "tauN": None, "gamma": 2.0},
    "sampler": {"lambda": 1.0, "r": 0.16, "M": 1, "seed": 0},
    "slr": {"wy": 6, "wx": 6, "rank_threshold": 0.05, "cg_iters": 10, "cg_tol": 1e-6},
    "mask": {"kind": "uniform", "R": 6, "acs_lines": 16, "acs_size": 32, "seed": 0},
    "paths": {},
}


@dataclass
class RunConfig:
    n_steps: int = 50
    sigma0: float = 0.01
    sigma_n: float = 1.0
    tau_n: float | None = None  # derived from the ACS extent when None
    gamma: float = 2.0
    lam: float = 1.0
    snr: float = 0.16
    corrector_steps: int = 1
    seed: int = 0
    slr_wy: int = 6
    slr_wx: int = 6
    rank_threshold: float = 0.05
    cg_iters: int = 10
    cg_tol: float = 1e-6
    mask_kind: str = "uniform"
    mask_r: int = 6
    acs_lines: int = 16
    acs_size: int = 32
    mask_seed: int = 0
    paths: dict = field(default_factory=dict)


def _merge(section: str, doc: dict) -> dict:
    merged = dict(_DEFAULTS[section])
    extra = doc.get(section, {})
    if not isinstance(extra, dict):
        raise ConfigError(f"section {section!r} must be an object")
    for key, value in extra.items():
        if key not in merged:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")
        merged[key] = value
    return merged


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and fill defaults."""
    for section in doc:
        if section not in _DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
    sched = _merge("schedule", doc)
    samp = _merge("sampler", doc)
    slr = _merge("slr", doc)
    mask = _merge("mask", doc)
    paths = doc.get("paths", {})

    cfg = RunConfig(
        n_steps=int(sched["N"]),
        sigma0=float(sched["sigma0"]),
        sigma_n=float(sched["sigmaN"]),
        tau_n=None if sched["tauN"] is None else float(sched["tauN"]),
        gamma=float(sched["gamma"]),
        lam=float(samp["lambda"]),
        snr=float(samp["r"]),
        corrector_steps=int(samp["M"]),
        seed=int(samp["seed"]),
        slr_wy=int(slr["wy"]),
        slr_wx=int(slr["wx"]),
        rank_threshold=float(slr["rank_threshold"]),
        cg_iters=int(slr["cg_iters"]),
        cg_tol=float(slr["cg_tol"]),
        mask_kind=str(mask["kind"]),
        mask_r=int(mask["R"]),
        acs_lines=int(mask["acs_lines"]),
        acs_size=int(mask["acs_size"]),
        mask_seed=int(mask["seed"]),
        paths=dict(paths),
    )

    if cfg.n_steps < 1:
        raise ConfigError(f"schedule.N must be >= 1, got {cfg.n_steps}")
    if not 0 < cfg.sigma0 < cfg.sigma_n:
        raise ConfigError(
            f"need 0 < sigma0 < sigmaN, got {cfg.sigma0}, {cfg.sigma_n}"
        )
    if cfg.tau_n is not None and cfg.tau_n <= 0:
        raise ConfigError(f"schedule.tauN must be positive, got {cfg.tau_n}")
    if cfg.gamma <= 0:
        raise ConfigError(f"schedule.gamma must be positive, got {cfg.gamma}")
    if cfg.lam < 0:
        raise ConfigError(f"sampler.lambda must be >= 0, got {cfg.lam}")
    if cfg.snr <= 0:
        raise ConfigError(f"sampler.r must be positive, got {cfg.snr}")
    if cfg.corrector_steps < 0:
        raise ConfigError(f"sampler.M must be >= 0, got {cfg.corrector_steps}")
    if cfg.slr_wy < 1 or cfg.slr_wx < 1:
        raise ConfigError(f"slr window must be >= 1, got {(cfg.slr_wy, cfg.slr_wx)}")
    if not 0 < cfg.rank_threshold < 1:
        raise ConfigError(f"slr.rank_threshold must be in (0,1), got {cfg.rank_threshold}")
    if cfg.cg_iters < 1:
        raise ConfigError(f"slr.cg_iters must be >= 1, got {cfg.cg_iters}")
    if cfg.cg_tol <= 0:
        raise ConfigError(f"slr.cg_tol must be positive, got {cfg.cg_tol}")
    if cfg.mask_kind not in ("uniform", "random", "acs-only"):
        raise ConfigError(f"mask.kind must be uniform|random|acs-only, got {cfg.mask_kind!r}")
    if cfg.mask_r < 1:
        raise ConfigError(f"mask.R must be >= 1, got {cfg.mask_r}")
    if cfg.acs_lines < 0 or cfg.acs_size < 0:
        raise ConfigError("mask ACS extents must be >= 0")
    return cfg


def load_config(path: str | None) -> RunConfig:
    """Load and validate a config file; None gives the defaults."""
    if path is None:
        return parse_config({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(doc)
