# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Hankel lifting kernels.

Single-pass gather/scatter over the valid patch grid; these run inside
every conjugate-gradient iteration of the structured-low-rank solve, which
is the hottest loop of a reconstruction.
"""
import numpy as np


def hankel_gather(double complex[:, :, ::1] z, Py_ssize_t wy, Py_ssize_t wx):
    cdef Py_ssize_t nc = z.shape[0], ky = z.shape[1], kx = z.shape[2]
    cdef Py_ssize_t my = ky - wy + 1, mx = kx - wx + 1
    out_arr = np.empty((my * mx, nc * wy * wx), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t c, py, px, dy, dx, row, base
    for py in range(my):
        for px in range(mx):
            row = py * mx + px
            for c in range(nc):
                base = c * wy * wx
                for dy in range(wy):
                    for dx in range(wx):
                        out[row, base + dy * wx + dx] = z[c, py + dy, px + dx]
    return out_arr


def hankel_scatter(double complex[:, ::1] mat, Py_ssize_t nc, Py_ssize_t ky,
                   Py_ssize_t kx, Py_ssize_t wy, Py_ssize_t wx):
    cdef Py_ssize_t my = ky - wy + 1, mx = kx - wx + 1
    out_arr = np.zeros((nc, ky, kx), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, py, px, dy, dx, row, base
    for py in range(my):
        for px in range(mx):
            row = py * mx + px
            for c in range(nc):
                base = c * wy * wx
                for dy in range(wy):
                    for dx in range(wx):
                        out[c, py + dy, px + dx] = out[c, py + dy, px + dx] + mat[row, base + dy * wx + dx]
    return out_arr
