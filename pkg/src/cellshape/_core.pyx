# cython: language_level=3
"""Compiled element and smoother kernels.

Same signatures and results as :mod:`cellshape._kernels_py`; selected at
import time by :mod:`cellshape.kernels`.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def triangle_geometry(const double[:, ::1] vertices, const long[:, ::1] triangles):
    cdef Py_ssize_t nt = triangles.shape[0]
    grads_arr = np.empty((nt, 3, 2))
    area_arr = np.empty(nt)
    cdef double[:, :, ::1] g = grads_arr
    cdef double[::1] area = area_arr
    cdef Py_ssize_t t
    cdef long i0, i1, i2
    cdef double x0, y0, x1, y1, x2, y2, det, inv
    for t in range(nt):
        i0 = triangles[t, 0]
        i1 = triangles[t, 1]
        i2 = triangles[t, 2]
        x0 = vertices[i0, 0]; y0 = vertices[i0, 1]
        x1 = vertices[i1, 0]; y1 = vertices[i1, 1]
        x2 = vertices[i2, 0]; y2 = vertices[i2, 1]
        det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        area[t] = 0.5 * det
        if det == 0.0:
            inv = 0.0
        else:
            inv = 1.0 / det
        g[t, 0, 0] = (y1 - y2) * inv
        g[t, 0, 1] = (x2 - x1) * inv
        g[t, 1, 0] = (y2 - y0) * inv
        g[t, 1, 1] = (x0 - x2) * inv
        g[t, 2, 0] = (y0 - y1) * inv
        g[t, 2, 1] = (x1 - x0) * inv
    return grads_arr, area_arr


def nodal_gradients(const double[:, :, ::1] grads, const long[:, ::1] triangles,
                    const double[:, ::1] field):
    cdef Py_ssize_t nt = triangles.shape[0]
    out_arr = np.zeros((nt, 2, 2))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t t, i, a, l
    cdef long vi
    for t in range(nt):
        for i in range(3):
            vi = triangles[t, i]
            for a in range(2):
                for l in range(2):
                    out[t, a, l] += field[vi, a] * grads[t, i, l]
    return out_arr


def elasticity_blocks(const double[:, :, ::1] grads, const double[::1] area,
                      const double[::1] lam, const double[::1] mu):
    cdef Py_ssize_t nt = grads.shape[0]
    out_arr = np.empty((nt, 6, 6))
    cdef double[:, :, ::1] K = out_arr
    cdef Py_ssize_t t, i, j, a, b
    cdef double A, la, m, dot
    for t in range(nt):
        A = area[t]
        la = lam[t]
        m = mu[t]
        for i in range(3):
            for j in range(3):
                dot = grads[t, i, 0] * grads[t, j, 0] + grads[t, i, 1] * grads[t, j, 1]
                for a in range(2):
                    for b in range(2):
                        K[t, 2 * i + a, 2 * j + b] = A * (
                            la * grads[t, i, a] * grads[t, j, b]
                            + m * grads[t, i, b] * grads[t, j, a]
                            + (m * dot if a == b else 0.0)
                        )
    return out_arr


def penalty_blocks(const double[:, :, ::1] grads, const double[::1] area,
                   const double[:, :, ::1] vgrad, double bound, double nu):
    cdef Py_ssize_t nt = grads.shape[0]
    res_arr = np.zeros((nt, 6))
    jac_arr = np.zeros((nt, 6, 6))
    act_arr = np.zeros(nt, dtype=bool)
    cdef double[:, ::1] res = res_arr
    cdef double[:, :, ::1] jac = jac_arr
    cdef cnp.npy_bool[::1] act = act_arr
    cdef double gv[6]
    cdef Py_ssize_t t, i, j, a, b
    cdef double s, c, dot, b2 = bound * bound
    for t in range(nt):
        s = (vgrad[t, 0, 0] * vgrad[t, 0, 0] + vgrad[t, 0, 1] * vgrad[t, 0, 1]
             + vgrad[t, 1, 0] * vgrad[t, 1, 0] + vgrad[t, 1, 1] * vgrad[t, 1, 1]) - b2
        if s <= 0.0:
            continue
        act[t] = True
        c = nu * area[t]
        for i in range(3):
            for a in range(2):
                gv[2 * i + a] = vgrad[t, a, 0] * grads[t, i, 0] + vgrad[t, a, 1] * grads[t, i, 1]
        for i in range(6):
            res[t, i] = c * s * gv[i]
            for j in range(6):
                jac[t, i, j] = 2.0 * c * gv[i] * gv[j]
        for i in range(3):
            for j in range(3):
                dot = grads[t, i, 0] * grads[t, j, 0] + grads[t, i, 1] * grads[t, j, 1]
                for a in range(2):
                    jac[t, 2 * i + a, 2 * j + a] += c * s * dot
    return res_arr, jac_arr, act_arr


def block_jacobi(const int[::1] indptr, const int[::1] indices, const double[::1] data,
                 const double[:, :, ::1] dinv, double[::1] x, const double[::1] rhs,
                 double omega, int sweeps):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nb = n // 2
    cdef double[::1] r = np.empty(n)
    cdef Py_ssize_t s, row, k, blk
    cdef double acc, r0, r1
    for s in range(sweeps):
        for row in range(n):
            acc = rhs[row]
            for k in range(indptr[row], indptr[row + 1]):
                acc -= data[k] * x[indices[k]]
            r[row] = acc
        for blk in range(nb):
            r0 = r[2 * blk]
            r1 = r[2 * blk + 1]
            x[2 * blk] += omega * (dinv[blk, 0, 0] * r0 + dinv[blk, 0, 1] * r1)
            x[2 * blk + 1] += omega * (dinv[blk, 1, 0] * r0 + dinv[blk, 1, 1] * r1)
    return np.asarray(x)
