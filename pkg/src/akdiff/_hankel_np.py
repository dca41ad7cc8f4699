"""Pure-numpy Hankel lifting kernels.

Fallback backend used when the compiled extension is unavailable; same
contract as ``_hankel_cy``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def hankel_gather(z: np.ndarray, wy: int, wx: int) -> np.ndarray:
    """Lift (nc, ky, kx) k-space into the block-Hankel patch matrix.

    Row r = valid patch position (py, px) in row-major order; column
    q = coil-major in-patch offset c*wy*wx + dy*wx + dx.
    """
    nc, ky, kx = z.shape
    my, mx = ky - wy + 1, kx - wx + 1
    win = sliding_window_view(z, (wy, wx), axis=(1, 2))  # (nc, my, mx, wy, wx)
    return np.ascontiguousarray(
        win.transpose(1, 2, 0, 3, 4).reshape(my * mx, nc * wy * wx)
    )


def hankel_scatter(mat: np.ndarray, nc: int, ky: int, kx: int, wy: int, wx: int) -> np.ndarray:
    """Adjoint of :func:`hankel_gather`: scatter-add patches back to a grid."""
    my, mx = ky - wy + 1, kx - wx + 1
    out = np.zeros((nc, ky, kx), dtype=np.complex128)
    blocks = mat.reshape(my, mx, nc, wy, wx)
    for dy in range(wy):
        for dx in range(wx):
            out[:, dy : dy + my, dx : dx + mx] += blocks[:, :, :, dy, dx].transpose(2, 0, 1)
    return out
