"""Benchmark the compiled Hankel kernels against the numpy fallback.

The gather/scatter pair runs inside every CG iteration of the structured-
low-rank solve, which itself runs inside every step of a reconstruction, so
this is the hottest loop of the package. Run after building the extension:

    python benchmarks/bench_hankel.py
"""
import time

import numpy as np

from akdiff import _hankel_np

try:
    from akdiff import _hankel_cy
except ImportError:
    _hankel_cy = None

CASES = [
    (4, 64, 64, 6, 6),
    (8, 128, 128, 6, 6),
    (4, 64, 64, 8, 8),
]


def _time(fn, *args, repeats=30):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(impl, nc, ky, kx, wy, wx, rng):
    z = rng.standard_normal((nc, ky, kx)) + 1j * rng.standard_normal((nc, ky, kx))
    mat = np.asarray(impl.hankel_gather(z, wy, wx))
    t_gather = _time(impl.hankel_gather, z, wy, wx)
    t_scatter = _time(impl.hankel_scatter, mat, nc, ky, kx, wy, wx)
    return t_gather, t_scatter


def bench_slr(backend_name, rng):
    """Time one full structured-low-rank solve under the chosen backend."""
    import importlib
    import os

    os.environ["AKDIFF_HANKEL_BACKEND"] = backend_name
    import akdiff.slr as slr_mod

    importlib.reload(slr_mod)
    from akdiff.core import AcsRegion, SamplingMask

    nc, ky, kx = 4, 64, 64
    # Few-exponential data: the calibration matrix has a real nullspace, so
    # the solve exercises the filter product at a realistic size.
    modes = np.exp(
        1j * np.outer(np.arange(ky), rng.uniform(0, 2 * np.pi, 3))
    )  # (ky, 3)
    cols = np.exp(1j * np.outer(np.arange(kx), rng.uniform(0, 2 * np.pi, 3)))
    weights = rng.standard_normal((nc, 3)) + 1j * rng.standard_normal((nc, 3))
    z0 = np.einsum("cj,yj,xj->cyx", weights, modes, cols)
    lines = np.zeros(ky, dtype=np.uint8)
    lines[::3] = 1
    lines[24:40] = 1
    mask = SamplingMask(
        mask=np.broadcast_to(lines[:, None], (ky, kx)).copy(),
        acs=AcsRegion(24, 40, 0, kx),
    )
    y = mask.mask * z0
    filt = slr_mod.estimate_annihilation(y[:, 24:40, :], slr_mod.HankelConfig(6, 6), 0.05)
    t0 = time.perf_counter()
    slr_mod.slr_correct(y, y, mask, filt, lam=1.0, cg_iters=10, cg_tol=0.0)
    elapsed = time.perf_counter() - t0
    del os.environ["AKDIFF_HANKEL_BACKEND"]
    importlib.reload(slr_mod)
    return elapsed, filt.n_filters


def main():
    rng = np.random.default_rng(0)
    backends = [("numpy", _hankel_np)]
    if _hankel_cy is not None:
        backends.append(("cython", _hankel_cy))
    else:
        print("compiled extension not built; benchmarking the fallback only")

    print(f"{'case':<24}{'backend':<10}{'gather':>12}{'scatter':>12}")
    for nc, ky, kx, wy, wx in CASES:
        for name, impl in backends:
            tg, ts = bench_backend(impl, nc, ky, kx, wy, wx, rng)
            case = f"{nc}x{ky}x{kx} w{wy}x{wx}"
            print(f"{case:<24}{name:<10}{tg * 1e3:>10.3f}ms{ts * 1e3:>10.3f}ms")

    print()
    for name, _ in backends:
        elapsed, nf = bench_slr(name, np.random.default_rng(1))
        print(f"slr_correct 4x64x64 (10 CG iters, {nf} filters) [{name}]: {elapsed * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
