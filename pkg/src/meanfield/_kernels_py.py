"""Pure NumPy versions of the hot loops; same signatures as the compiled core."""

from __future__ import annotations

import numpy as np


def atom_exp_sums(u, alphas, weights, shift):
    """Per-cell sums of ``w_j * alpha_j**m * exp(alpha_j*u - shift)`` for m = 0, 1, 2."""
    u = np.asarray(u, dtype=np.float64)
    s0 = np.zeros_like(u)
    s1 = np.zeros_like(u)
    s2 = np.zeros_like(u)
    for a, w in zip(alphas, weights):
        e = w * np.exp(a * u - shift)
        s0 += e
        e = a * e
        s1 += e
        s2 += a * e
    return s0, s1, s2


def exp_shifted(u, shift):
    return np.exp(np.asarray(u, dtype=np.float64) - shift)


def stencil_apply(grid, diag, cw, ce, cs, cn, inside):
    """Five-point operator on a (ny, nx) array; zero outside ``inside``."""
    out = diag * grid
    out[:, 1:] -= cw[:, 1:] * grid[:, :-1]
    out[:, :-1] -= ce[:, :-1] * grid[:, 1:]
    out[1:, :] -= cs[1:, :] * grid[:-1, :]
    out[:-1, :] -= cn[:-1, :] * grid[1:, :]
    out[~inside] = 0.0
    return out


def edge_energy(grid, inside, cut_inv_x, cut_inv_y):
    """Sum of squared differences over interior edges plus cut-arm terms."""
    g = np.where(inside, grid, 0.0)
    both_x = inside[:, 1:] & inside[:, :-1]
    both_y = inside[1:, :] & inside[:-1, :]
    dx = (g[:, 1:] - g[:, :-1])[both_x]
    dy = (g[1:, :] - g[:-1, :])[both_y]
    arms = (cut_inv_x + cut_inv_y) * g * g
    return float(np.dot(dx, dx) + np.dot(dy, dy) + arms[inside].sum())


def barycenter_eval(points, centers, log_t, alpha_tilde, eps0, core, want_grad):
    """Value and gradient of (1/a) log sum_i t_i exp(a v_i) at ``points``.

    ``v_i`` is the truncated logarithmic bubble: zero beyond ``eps0``,
    ``4 log(eps0/|x-c_i|)`` in the layer and flat inside ``core``.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = pts[:, None, :] - centers[None, :, :]
    s = np.sqrt(np.einsum("nkd,nkd->nk", d, d))
    v = np.where(s >= eps0, 0.0, 4.0 * np.log(eps0 / np.maximum(s, core)))
    z = log_t[None, :] + alpha_tilde * v
    zmax = z.max(axis=1)
    wts = np.exp(z - zmax[:, None])
    tot = wts.sum(axis=1)
    val = (zmax + np.log(tot)) / alpha_tilde
    if not want_grad:
        return val, None
    layer = (s < eps0) & (s > core)
    safe = np.where(layer, s, 1.0)
    gv = np.where(layer[:, :, None], -4.0 * d / (safe * safe)[:, :, None], 0.0)
    grad = np.einsum("nk,nkd->nd", wts, gv) / tot[:, None]
    return val, grad
