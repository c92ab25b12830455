"""Closed-form test functions with adapted quadrature.

The test-function families concentrate on scales far below any affordable
grid (core radii down to ``eps0 * 2**-10``, bubble widths down to ``1e-6``).
Integrals over them are computed on polar Gauss-Legendre rules graded in
``log |x - c|`` around each center, and the flat background contributes
through ``int_Omega e^{alpha u} = |Omega| + int_supp (e^{alpha u} - 1)``.
Every profile can also be sampled onto a grid as a :class:`Field`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from .domain import DiscreteDomain, DomainError, EmbeddedCurve, Field
from .measure import IntensityMeasure

GL_NODES = 8
LOG_PANEL = 0.25
N_ANGLES = 128


def _gl(n: int = GL_NODES) -> tuple[NDArray, NDArray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def radial_rule(r_lo: float, r_hi: float, r_core: float | None = None) -> tuple[NDArray, NDArray]:
    """Nodes and weights for ``int_0^{r_hi} g(s) s ds``.

    ``[0, r_lo]`` gets one Gauss panel, ``[r_lo, r_hi]`` log-graded panels.
    ``r_core`` (if inside) is made a panel breakpoint.
    """
    x, w = _gl()
    s_nodes = [r_lo * x]
    s_wts = [r_lo * w * (r_lo * x)]
    breaks = [math.log(r_lo), math.log(r_hi)]
    if r_core is not None and r_lo < r_core < r_hi:
        breaks.insert(1, math.log(r_core))
    for a, b in zip(breaks, breaks[1:]):
        n = max(1, math.ceil((b - a) / LOG_PANEL))
        edges = np.linspace(a, b, n + 1)
        for lo, hi in zip(edges, edges[1:]):
            t = lo + (hi - lo) * x
            s = np.exp(t)
            s_nodes.append(s)
            s_wts.append((hi - lo) * w * s * s)
    return np.concatenate(s_nodes), np.concatenate(s_wts)


def polar_rule(center: ArrayLike, r_lo: float, r_hi: float, r_core: float | None = None, n_angles: int = N_ANGLES):
    s, ws = radial_rule(r_lo, r_hi, r_core)
    phi = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    c = np.asarray(center, dtype=np.float64)
    pts = np.empty((s.size * n_angles, 2))
    pts[:, 0] = (c[0] + np.outer(s, np.cos(phi))).ravel()
    pts[:, 1] = (c[1] + np.outer(s, np.sin(phi))).ravel()
    wts = np.repeat(ws * (2 * np.pi / n_angles), n_angles)
    return pts, wts


@dataclass(frozen=True)
class Region:
    """Disk ``B_radius(center)`` used as a subdomain in mass bookkeeping."""

    center: tuple[float, float]
    radius: float

    def contains(self, points: NDArray) -> NDArray:
        p = np.atleast_2d(points)
        return np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) < self.radius

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def distance(self, other: Region) -> float:
        return math.hypot(self.center[0] - other.center[0], self.center[1] - other.center[1]) - self.radius - other.radius


class Profile:
    """Base class: a compactly supported closed-form function on Omega."""

    area: float
    scale: float = 1.0

    def values(self, points: ArrayLike) -> NDArray:  # pragma: no cover - abstract
        raise NotImplementedError

    def gradients(self, points: ArrayLike) -> NDArray:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def rule(self) -> tuple[NDArray, NDArray]:  # pragma: no cover - abstract
        raise NotImplementedError

    @cached_property
    def _cache(self):
        pts, wts = self.rule
        vals = self.values(pts)
        grads = self.gradients(pts)
        return pts, wts, vals, grads

    def dirichlet_energy(self) -> float:
        _, w, _, g = self._cache
        return float(w @ np.einsum("nd,nd->n", g, g))

    def _excess(self, measure: IntensityMeasure, mask: NDArray | None = None, weight: NDArray | None = None):
        """``(shift, int (e^{alpha u} - 1) weight)`` over the support, scaled by ``e^-shift``."""
        _, w, v, _ = self._cache
        top = measure.sup_support()
        shift = max(0.0, top * float(v.max()))
        # the flat background is handled exactly by the caller, so only the
        # excess over 1 is integrated here
        ex = measure.exp_sums(v, shift, mmax=0)[0] - math.exp(-shift)
        ww = w if weight is None else w * weight
        if mask is not None:
            ww = ww * mask
        return shift, complex(np.sum(ww * ex)) if np.iscomplexobj(ww) else float(ww @ ex)

    def log_integral(self, measure: IntensityMeasure) -> float:
        """``log iint e^{alpha u} P(d alpha) dx`` over Omega."""
        shift, ex = self._excess(measure)
        return shift + math.log(self.area * math.exp(-shift) + ex)

    def region_integral(self, measure: IntensityMeasure, region: Region) -> float:
        """``log int_region int e^{alpha u} P``; the region must lie inside Omega."""
        pts, _, _, _ = self._cache
        shift, ex = self._excess(measure, mask=region.contains(pts))
        return shift + math.log(region.area * math.exp(-shift) + ex)

    def moment(self, measure: IntensityMeasure, curve: EmbeddedCurve, j: int, chi_integral: complex) -> complex:
        """``int chi^j dmu(u)`` with ``mu`` the normalized density."""
        pts, _, _, _ = self._cache
        shift, ex = self._excess(measure, weight=curve.chi(pts) ** j)
        num = chi_integral * math.exp(-shift) + ex
        den = self.area * math.exp(-shift) + self._excess(measure)[1]
        return complex(num / den)

    def sample(self, domain: DiscreteDomain, min_core_cells: float = 4.0) -> Field:
        self.check_resolvable(domain.h, min_core_cells)
        return Field(domain, self.values(domain.points))

    def check_resolvable(self, h: float, min_core_cells: float) -> None:
        pass


class TruncatedBubble(Profile):
    """``2 log((eps^2 + r0^2)/(eps^2 + |x - x0|^2))`` inside ``B_r0(x0)``, zero outside."""

    def __init__(self, center: ArrayLike, r0: float, eps: float, area: float):
        self.center = np.asarray(center, dtype=np.float64)
        self.r0, self.eps, self.area = float(r0), float(eps), float(area)

    def values(self, points):
        p = np.atleast_2d(points)
        s2 = ((p - self.center) ** 2).sum(axis=1)
        e2 = self.eps**2
        return np.where(s2 < self.r0**2, 2.0 * np.log((e2 + self.r0**2) / (e2 + s2)), 0.0)

    def gradients(self, points):
        p = np.atleast_2d(points)
        d = p - self.center
        s2 = (d * d).sum(axis=1)
        coef = np.where(s2 < self.r0**2, -4.0 / (self.eps**2 + s2), 0.0)
        return d * coef[:, None]

    @property
    def rule(self):
        lo = min(self.eps * 1e-3, self.r0 * 1e-3)
        return polar_rule(self.center, lo, self.r0, self.eps if self.eps < self.r0 else None, n_angles=16)

    def exact_energy(self) -> float:
        e2, r2 = self.eps**2, self.r0**2
        return 16 * math.pi * (math.log((e2 + r2) / e2) - r2 / (e2 + r2))

    def check_resolvable(self, h, min_core_cells):
        if self.eps < min_core_cells * h:
            raise DomainError("bubble width below the grid resolution")


class BarycenterProfile(Profile):
    """``scale * (1/a) log sum_i t_i exp(a v_i)`` with truncated log bubbles ``v_i``.

    ``v_i`` vanishes outside ``B_eps0(c_i)``, equals ``4 log(eps0/|x - c_i|)``
    in the layer and ``4 log(1/(1 - r))`` on the core ``B_{eps0(1-r)}(c_i)``.
    """

    def __init__(
        self,
        centers: ArrayLike,
        weights: Sequence[float],
        r: float,
        eps0: float,
        alpha_tilde: float,
        area: float,
        scale: float = 1.0,
    ):
        c = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        t = np.asarray(weights, dtype=np.float64)
        if not 0.0 <= r < 1.0:
            raise ValueError("r must lie in [0, 1)")
        keep = t > 0
        self.centers, self.weights = c[keep], t[keep]
        self.r, self.eps0, self.alpha_tilde = float(r), float(eps0), float(alpha_tilde)
        self.core = self.eps0 * (1.0 - self.r)
        self.area, self.scale = float(area), float(scale)
        self._log_t = np.log(self.weights)

    def values(self, points):
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        if self.scale == 0.0:
            return np.zeros(len(p))
        v, _ = kernels.barycenter_eval(p, self.centers, self._log_t, self.alpha_tilde, self.eps0, self.core, False)
        return self.scale * np.maximum(v, 0.0)

    def gradients(self, points):
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        if self.scale == 0.0:
            return np.zeros((len(p), 2))
        v, g = kernels.barycenter_eval(p, self.centers, self._log_t, self.alpha_tilde, self.eps0, self.core, True)
        # outside every ball the log-sum-exp is exactly 0 and flat
        g = np.where((v > 0.0)[:, None], g, 0.0)
        return self.scale * g

    @cached_property
    def rule(self):
        uniq = np.unique(np.round(self.centers, 14), axis=0)
        pts_all, w_all = [], []
        for i, c in enumerate(uniq):
            lo = min(self.core, self.eps0) * 0.5 if self.core > 0 else self.eps0 * 1e-6
            p, w = polar_rule(c, lo, self.eps0, self.core if self.core < self.eps0 else None)
            if len(uniq) > 1:
                d = np.stack([np.hypot(p[:, 0] - q[0], p[:, 1] - q[1]) for q in uniq], axis=1)
                own = np.argmin(d, axis=1) == i
                p, w = p[own], w[own]
            pts_all.append(p)
            w_all.append(w)
        return np.concatenate(pts_all), np.concatenate(w_all)

    def check_resolvable(self, h, min_core_cells):
        if self.scale != 0.0 and self.core < min_core_cells * h:
            raise DomainError(f"core radius {self.core:.3g} is below {min_core_cells:g} grid cells")
