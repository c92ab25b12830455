"""Vortex-intensity probability measures on [0, 1].

A measure is a finite list of atoms plus a piecewise-linear density. Scalar
integrals ``int alpha^m exp(alpha t) P(d alpha)`` are evaluated in closed form
on each linear density piece, which keeps them exact to rounding for any ``t``;
per-cell field integrals reuse the same formula in vectorized form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammainc

from . import kernels

MASS_TOL = 1e-12
LOG_THRESHOLD = 700.0
_SERIES_CUTOFF = 1e-3


class MeasureError(ValueError):
    """Raised for measures that violate the probability-measure contract."""


def _exp_moments(tau: NDArray, length: float, pmax: int) -> list[NDArray]:
    """``E_p = int_0^L s^p exp(-tau s) ds`` for p = 0..pmax, with ``tau >= 0``."""
    x = tau * length
    small = x < _SERIES_CUTOFF
    out = []
    safe_tau = np.where(small, 1.0, tau)
    for p in range(pmax + 1):
        big = math.factorial(p) / safe_tau ** (p + 1) * gammainc(p + 1, np.where(small, 1.0, x))
        # short alternating series for tiny tau*L
        ser = np.zeros_like(x)
        term = np.ones_like(x)
        for n in range(8):
            ser = ser + term / (p + 1 + n)
            term = term * (-x) / (n + 1)
        out.append(np.where(small, length ** (p + 1) * ser, big))
    return out


def _piece_moments(
    t: NDArray, a: float, b: float, va: float, vb: float, shift: NDArray, mmax: int
) -> list[NDArray]:
    """``int_a^b f(al) al^m exp(al t - shift) d al`` for a linear ``f`` with f(a)=va, f(b)=vb."""
    length = b - a
    kappa = (vb - va) / length
    pos = t >= 0
    tau = np.abs(t)
    E = _exp_moments(tau, length, mmax + 1)
    anchor = np.where(pos, b, a)
    pref = np.exp(t * anchor - shift)
    res = []
    for m in range(mmax + 1):
        # polynomial q(s) in the offset s from the dominant endpoint
        qp = np.polynomial.polynomial.polymul([vb, -kappa], np.polynomial.polynomial.polypow([b, -1.0], m))
        qn = np.polynomial.polynomial.polymul([va, kappa], np.polynomial.polynomial.polypow([a, 1.0], m))
        acc_p = sum(c * E[p] for p, c in enumerate(qp))
        acc_n = sum(c * E[p] for p, c in enumerate(qn))
        res.append(pref * np.where(pos, acc_p, acc_n))
    return res


@dataclass(frozen=True)
class IntensityMeasure:
    """Probability measure on [0, 1]: atoms plus a piecewise-linear density.

    Parameters
    ----------
    atoms
        Pairs ``(alpha, weight)``. Duplicate locations are merged.
    breakpoints, values
        Density nodes; the density is linear between consecutive breakpoints
        and zero outside ``[breakpoints[0], breakpoints[-1]]``.
    quadrature_nodes
        Points per density piece for the composite trapezoid rule
        (:meth:`trapezoid_integral`).
    """

    atom_locations: tuple[float, ...] = ()
    atom_weights: tuple[float, ...] = ()
    breakpoints: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    quadrature_nodes: int = 33
    _alphas: NDArray = field(init=False, repr=False, compare=False)
    _weights: NDArray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        locs = [float(a) for a in self.atom_locations]
        wts = [float(w) for w in self.atom_weights]
        if len(locs) != len(wts):
            raise MeasureError("atom locations and weights differ in length")
        merged: dict[float, float] = {}
        for a, w in zip(locs, wts):
            if not (0.0 <= a <= 1.0) or not math.isfinite(a):
                raise MeasureError(f"atom location {a} outside [0, 1]")
            if not (w > 0.0) or not math.isfinite(w):
                raise MeasureError(f"atom weight {w} must be positive")
            merged[a] = merged.get(a, 0.0) + w
        order = sorted(merged)
        object.__setattr__(self, "atom_locations", tuple(order))
        object.__setattr__(self, "atom_weights", tuple(merged[a] for a in order))
        bp = tuple(float(x) for x in self.breakpoints)
        vals = tuple(float(x) for x in self.values)
        if len(bp) != len(vals):
            raise MeasureError("density breakpoints and values differ in length")
        if len(bp) == 1:
            raise MeasureError("a density needs at least two breakpoints")
        if bp:
            if bp[0] < 0.0 or bp[-1] > 1.0:
                raise MeasureError("density support must lie in [0, 1]")
            if any(y <= x for x, y in zip(bp, bp[1:])):
                raise MeasureError("density breakpoints must be strictly increasing")
            if any(v < 0.0 or not math.isfinite(v) for v in vals):
                raise MeasureError("density values must be finite and nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if int(self.quadrature_nodes) < 2:
            raise MeasureError("quadrature_nodes must be at least 2")
        object.__setattr__(self, "_alphas", np.array(order, dtype=np.float64))
        object.__setattr__(self, "_weights", np.array([merged[a] for a in order], dtype=np.float64))
        total = self.total_mass()
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {total!r} differs from 1")
        if self.sup_support() < 0.0:
            raise MeasureError("measure has empty support")

    # construction helpers
    @classmethod
    def dirac(cls, alpha: float = 1.0) -> IntensityMeasure:
        return cls((alpha,), (1.0,))

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0, quadrature_nodes: int = 33) -> IntensityMeasure:
        h = 1.0 / (b - a)
        return cls(breakpoints=(a, b), values=(h, h), quadrature_nodes=quadrature_nodes)

    @classmethod
    def from_parts(
        cls,
        atoms: Iterable[tuple[float, float]] = (),
        breakpoints: Sequence[float] = (),
        values: Sequence[float] = (),
        quadrature_nodes: int = 33,
        normalize: bool = False,
    ) -> IntensityMeasure:
        atoms = list(atoms)
        locs = tuple(a for a, _ in atoms)
        wts = [w for _, w in atoms]
        vals = list(values)
        if normalize:
            dens = sum(0.5 * (vals[i] + vals[i + 1]) * (breakpoints[i + 1] - breakpoints[i]) for i in range(len(vals) - 1))
            tot = sum(wts) + dens
            if tot <= 0:
                raise MeasureError("cannot normalize a zero measure")
            wts = [w / tot for w in wts]
            vals = [v / tot for v in vals]
        return cls(locs, tuple(wts), tuple(breakpoints), tuple(vals), quadrature_nodes)

    # basic bookkeeping
    @property
    def pieces(self) -> list[tuple[float, float, float, float]]:
        bp, v = self.breakpoints, self.values
        return [(bp[i], bp[i + 1], v[i], v[i + 1]) for i in range(len(bp) - 1) if v[i] > 0 or v[i + 1] > 0]

    def total_mass(self) -> float:
        dens = math.fsum(0.5 * (va + vb) * (b - a) for a, b, va, vb in self.pieces)
        return math.fsum(self.atom_weights) + dens

    def sup_support(self) -> float:
        cands = list(self.atom_locations) + [b for _, b, _, _ in self.pieces]
        return max(cands) if cands else -1.0

    def mass_at_one(self) -> float:
        return sum(w for a, w in zip(self.atom_locations, self.atom_weights) if a == 1.0)

    def mean(self) -> float:
        """First moment ``m1 = int alpha P(d alpha)``."""
        return float(self.weighted_exp(0.0, 1))

    def tail_mass(self, eps: float) -> float:
        """``P([1 - eps, 1])``."""
        if not (0.0 < eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        lo = 1.0 - eps
        tot = sum(w for a, w in zip(self.atom_locations, self.atom_weights) if a >= lo)
        for a, b, va, vb in self.pieces:
            if b <= lo:
                continue
            c = max(a, lo)
            vc = va + (vb - va) * (c - a) / (b - a)
            tot += 0.5 * (vc + vb) * (b - c)
        return min(tot, 1.0) if eps == 1.0 else tot

    def mass_above(self, alpha0: float) -> float:
        """``P([alpha0, 1])``."""
        return self.tail_mass(1.0 - alpha0) if alpha0 < 1.0 else self.mass_at_one()

    @property
    def atom_arrays(self) -> tuple[NDArray, NDArray]:
        return self._alphas, self._weights

    @property
    def is_single_unit_atom(self) -> bool:
        return self.atom_locations == (1.0,) and not self.pieces

    # integrals
    def exp_sums(self, u: ArrayLike, shift: float | NDArray = 0.0, mmax: int = 2) -> tuple[NDArray, ...]:
        """Per-point ``S_m = int alpha^m exp(alpha u - shift) P(d alpha)``, m = 0..mmax."""
        u = np.ascontiguousarray(u, dtype=np.float64)
        scalar_shift = np.ndim(shift) == 0
        if scalar_shift:
            s = kernels.atom_exp_sums(u.ravel(), self._alphas, self._weights, float(shift))
            sums = [x.reshape(u.shape) for x in s]
        else:
            sh = np.broadcast_to(shift, u.shape)
            sums = [np.zeros_like(u) for _ in range(3)]
            for a, w in zip(self._alphas, self._weights):
                e = w * np.exp(a * u - sh)
                sums[0] += e
                sums[1] += a * e
                sums[2] += a * a * e
        sums = sums[: mmax + 1]
        if self.pieces:
            sh = np.broadcast_to(np.asarray(shift, dtype=np.float64), u.shape)
            for a, b, va, vb in self.pieces:
                part = _piece_moments(u, a, b, va, vb, sh, mmax)
                for m in range(mmax + 1):
                    sums[m] = sums[m] + part[m]
        return tuple(sums)

    def log_weighted_exp(self, t: ArrayLike, moment: int = 0) -> NDArray | float:
        """``log int alpha^moment exp(alpha t) P(d alpha)`` without overflow."""
        t_arr = np.asarray(t, dtype=np.float64)
        shift = self._shift_for(t_arr)
        s = self.exp_sums(t_arr.reshape(-1), shift.reshape(-1), mmax=moment)[moment]
        with np.errstate(divide="ignore"):
            out = shift.reshape(-1) + np.log(s)
        out = out.reshape(t_arr.shape)
        return float(out) if out.ndim == 0 else out

    def weighted_exp(self, t: ArrayLike, moment: int = 0, log: bool = False) -> NDArray | float:
        """``int alpha^moment exp(alpha t) P(d alpha)``.

        Evaluated in log space for ``t`` above 700; requesting linear output
        that would overflow raises ``OverflowError``.
        """
        if moment not in (0, 1, 2):
            raise ValueError("moment must be 0, 1 or 2")
        t_arr = np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(t_arr)):
            raise ValueError("t must be finite")
        if log or np.any(t_arr > LOG_THRESHOLD):
            lv = self.log_weighted_exp(t_arr, moment)
            if log:
                return lv
            if np.any(np.asarray(lv) > 709.0):
                raise OverflowError("weighted_exp overflows double precision; request log=True")
            return np.exp(lv) if np.ndim(lv) else float(np.exp(lv))
        s = self.exp_sums(t_arr.reshape(-1), 0.0, mmax=moment)[moment].reshape(t_arr.shape)
        return float(s) if s.ndim == 0 else s

    def _shift_for(self, t: NDArray) -> NDArray:
        top = self.sup_support()
        lo = min(list(self.atom_locations) + [a for a, _, _, _ in self.pieces])
        return np.maximum(top * t, lo * t)

    def trapezoid_integral(self, fn, nodes: int | None = None) -> float:
        """Composite-trapezoid integral of ``fn(alpha)`` against the density part plus atoms."""
        n = self.quadrature_nodes if nodes is None else nodes
        tot = sum(w * float(fn(a)) for a, w in zip(self.atom_locations, self.atom_weights))
        for a, b, va, vb in self.pieces:
            x = np.linspace(a, b, n)
            dens = va + (vb - va) * (x - a) / (b - a)
            tot += float(np.trapezoid(dens * fn(x), x))
        return tot

    def alpha_bins(self, per_piece: int = 16) -> list[tuple[float, float, float, float, float]]:
        """Subdivide density pieces into short linear pieces ``(a, b, va, vb, mid)``."""
        out = []
        for a, b, va, vb in self.pieces:
            xs = np.linspace(a, b, per_piece + 1)
            vs = va + (vb - va) * (xs - a) / (b - a)
            for i in range(per_piece):
                out.append((xs[i], xs[i + 1], vs[i], vs[i + 1], 0.5 * (xs[i] + xs[i + 1])))
        return out

    def to_dict(self) -> dict:
        out: dict = {
            "atoms": [{"alpha": a, "weight": w} for a, w in zip(self.atom_locations, self.atom_weights)],
            "quadrature_nodes": self.quadrature_nodes,
        }
        if self.breakpoints:
            out["density"] = {"breakpoints": list(self.breakpoints), "values": list(self.values)}
        return out


def normalize_support(measure: IntensityMeasure, lam: float) -> tuple[IntensityMeasure, float]:
    """Push ``P`` forward under ``alpha -> alpha / abar`` and return ``abar**2 * lam``."""
    abar = measure.sup_support()
    if abar <= 0.0:
        raise MeasureError("all mass sits at alpha = 0; the equation degenerates to -Lap u = 0")
    if abar == 1.0:
        return measure, lam
    locs = tuple(a / abar for a in measure.atom_locations)
    bp, vals = [], []
    for x, v in zip(measure.breakpoints, measure.values):
        if x <= abar:
            bp.append(min(x / abar, 1.0))
            vals.append(v * abar)
    if len(bp) < 2:
        bp, vals = [], []
    new = IntensityMeasure(locs, measure.atom_weights, tuple(bp), tuple(vals), measure.quadrature_nodes)
    return new, abar * abar * lam
