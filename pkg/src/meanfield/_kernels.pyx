# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror ``_kernels_py``."""

import numpy as np
from libc.math cimport exp, log, sqrt


def atom_exp_sums(u, alphas, weights, double shift):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(alphas, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], m = av.shape[0], i, j
    s0 = np.zeros(n)
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    cdef double[::1] o0 = s0, o1 = s1, o2 = s2
    cdef double e, a, t0, t1, t2
    for i in range(n):
        t0 = 0.0
        t1 = 0.0
        t2 = 0.0
        for j in range(m):
            a = av[j]
            e = wv[j] * exp(a * uv[i] - shift)
            t0 += e
            e = a * e
            t1 += e
            t2 += a * e
        o0[i] = t0
        o1[i] = t1
        o2[i] = t2
    return s0, s1, s2


def exp_shifted(u, double shift):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = exp(uv[i] - shift)
    return out


def stencil_apply(grid, diag, cw, ce, cs, cn, inside):
    cdef const double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef const double[:, ::1] dg = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(cw, dtype=np.float64)
    cdef const double[:, ::1] e = np.ascontiguousarray(ce, dtype=np.float64)
    cdef const double[:, ::1] s = np.ascontiguousarray(cs, dtype=np.float64)
    cdef const double[:, ::1] nn = np.ascontiguousarray(cn, dtype=np.float64)
    cdef const unsigned char[:, ::1] ins = np.ascontiguousarray(inside, dtype=np.uint8)
    cdef Py_ssize_t ny = g.shape[0], nx = g.shape[1], i, j
    out = np.zeros((ny, nx))
    cdef double[:, ::1] o = out
    cdef double acc
    for i in range(ny):
        for j in range(nx):
            if not ins[i, j]:
                continue
            acc = dg[i, j] * g[i, j]
            if j > 0:
                acc -= w[i, j] * g[i, j - 1]
            if j < nx - 1:
                acc -= e[i, j] * g[i, j + 1]
            if i > 0:
                acc -= s[i, j] * g[i - 1, j]
            if i < ny - 1:
                acc -= nn[i, j] * g[i + 1, j]
            o[i, j] = acc
    return out


def edge_energy(grid, inside, cut_inv_x, cut_inv_y):
    cdef const double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef const unsigned char[:, ::1] ins = np.ascontiguousarray(inside, dtype=np.uint8)
    cdef const double[:, ::1] cx = np.ascontiguousarray(cut_inv_x, dtype=np.float64)
    cdef const double[:, ::1] cy = np.ascontiguousarray(cut_inv_y, dtype=np.float64)
    cdef Py_ssize_t ny = g.shape[0], nx = g.shape[1], i, j
    cdef double edges = 0.0, arms = 0.0, d, v
    for i in range(ny):
        for j in range(nx):
            if not ins[i, j]:
                continue
            v = g[i, j]
            arms += (cx[i, j] + cy[i, j]) * v * v
            if j < nx - 1 and ins[i, j + 1]:
                d = g[i, j + 1] - v
                edges += d * d
            if i < ny - 1 and ins[i + 1, j]:
                d = g[i + 1, j] - v
                edges += d * d
    return edges + arms


def barycenter_eval(points, centers, log_t, double alpha_tilde, double eps0,
                    double core, bint want_grad):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] lt = np.ascontiguousarray(log_t, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], k = c.shape[0], i, j
    val = np.empty(n)
    cdef double[::1] vo = val
    grad = np.zeros((n, 2)) if want_grad else None
    cdef double[:, ::1] go
    if want_grad:
        go = grad
    cdef double dx, dy, s, v, z, zmax, tot, wt, gx, gy, s2
    for i in range(n):
        zmax = -1e308
        for j in range(k):
            dx = p[i, 0] - c[j, 0]
            dy = p[i, 1] - c[j, 1]
            s = sqrt(dx * dx + dy * dy)
            if s >= eps0:
                v = 0.0
            elif s <= core:
                v = 4.0 * log(eps0 / core)
            else:
                v = 4.0 * log(eps0 / s)
            z = lt[j] + alpha_tilde * v
            if z > zmax:
                zmax = z
        tot = 0.0
        gx = 0.0
        gy = 0.0
        for j in range(k):
            dx = p[i, 0] - c[j, 0]
            dy = p[i, 1] - c[j, 1]
            s = sqrt(dx * dx + dy * dy)
            if s >= eps0:
                v = 0.0
            elif s <= core:
                v = 4.0 * log(eps0 / core)
            else:
                v = 4.0 * log(eps0 / s)
            wt = exp(lt[j] + alpha_tilde * v - zmax)
            tot += wt
            if want_grad and s < eps0 and s > core:
                s2 = s * s
                gx -= wt * 4.0 * dx / s2
                gy -= wt * 4.0 * dy / s2
        vo[i] = (zmax + log(tot)) / alpha_tilde
        if want_grad:
            go[i, 0] = gx / tot
            go[i, 1] = gy / tot
    return val, grad
