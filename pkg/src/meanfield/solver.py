"""Newton solver and lambda-continuation for the mean field equation.

The discrete problem is ``F(u) = A u - f(u) = 0`` with ``A = -Lap_h`` and

    f(u) = lam * S1(u) / D(u),    S_m(x) = int alpha^m exp(alpha u(x)) P(d alpha),
    D(u) = h^2 sum_i S0(u_i) + |strip| * 1,

where ``|strip|`` is the exact area of Omega not covered by lattice cells (u
vanishes there). The Jacobian is ``A - diag(lam S2/D) + lam h^2 g g^T`` with
``g = S1/D``: sparse plus a rank-one coupling from the denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from . import kernels
from .domain import DiscreteDomain, Field
from .measure import IntensityMeasure

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolveConfig:
    """Newton and continuation controls."""

    tol: float = 1e-10
    max_iter: int = 50
    min_damping: float = 2.0**-20
    divergence_window: int = 5
    dlam: float = 0.5
    dlam_max: float = 2.0
    dlam_min: float = 1e-4
    shrink: float = 0.5
    grow: float = 1.5
    max_jump: float = 1.0
    min_resolved_scale: float = 2.0
    linear_solver: str = "sherman_morrison"

    def __post_init__(self) -> None:
        for name in ("tol", "min_damping", "dlam", "dlam_max", "dlam_min", "max_jump", "min_resolved_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.grow < 1:
            raise ValueError("grow must be at least 1")
        if self.max_iter < 1 or self.divergence_window < 1:
            raise ValueError("iteration counts must be positive")
        if self.linear_solver not in ("sherman_morrison", "gmres"):
            raise ValueError("linear_solver must be 'sherman_morrison' or 'gmres'")


@dataclass(frozen=True)
class Terms:
    """Nonlinear quantities at a given ``u`` (all normalized by ``D``)."""

    f: NDArray
    g: NDArray
    v: NDArray
    log_I: float
    nu_total: float


def _shift(u: NDArray, measure: IntensityMeasure) -> float:
    top = max(measure.sup_support(), 0.0)
    return max(0.0, top * float(u.max())) if u.size else 0.0


def evaluate_terms(u: Field, lam: float, measure: IntensityMeasure, jacobian: bool = True) -> Terms:
    dom = u.domain
    uv = u.values
    if not np.all(np.isfinite(uv)):
        raise FloatingPointError("u must be finite")
    M = _shift(uv, measure)
    sums = measure.exp_sums(uv, M, mmax=2 if jacobian else 1)
    s0, s1 = sums[0], sums[1]
    h2 = dom.h * dom.h
    eM = math.exp(-M)
    D = h2 * s0.sum() + dom.strip_area * eM
    g = s1 / D
    nu = lam * (h2 * s1.sum() + dom.strip_area * measure.mean() * eM) / D
    v = lam * sums[2] / D if jacobian else None
    return Terms(f=lam * g, g=g, v=v, log_I=M + math.log(D), nu_total=float(nu))


def nonlinearity(u: Field, lam: float, measure: IntensityMeasure) -> Field:
    """``lam * int alpha e^{alpha u} P / iint e^{alpha u} P``."""
    return Field(u.domain, evaluate_terms(u, lam, measure, jacobian=False).f)


def standard_nonlinearity(u: Field, lam: float) -> Field:
    """Classical mean field right-hand side ``lam e^u / int e^u`` (single intensity)."""
    dom = u.domain
    M = max(0.0, float(u.values.max())) if u.values.size else 0.0
    e = kernels.exp_shifted(u.values, M)
    D = dom.h * dom.h * e.sum() + dom.strip_area * math.exp(-M)
    # same operation order as evaluate_terms so a unit atom reproduces it bitwise
    return Field(dom, lam * (e / D))


def residual(u: Field, lam: float, measure: IntensityMeasure) -> Field:
    return Field(u.domain, u.domain.apply(u.values) - nonlinearity(u, lam, measure).values)


def jacobian_apply(u: Field, lam: float, measure: IntensityMeasure, direction: NDArray) -> NDArray:
    """Directional derivative of the residual map."""
    t = evaluate_terms(u, lam, measure)
    h2 = u.domain.h ** 2
    return u.domain.apply(direction) - t.v * direction + lam * h2 * t.g * float(t.g @ direction)


@dataclass(frozen=True)
class SolveResult:
    """Outcome of one Newton solve."""

    u: Field
    lam: float
    residual: float
    iterations: int
    converged: bool
    log_I: float
    nu_total: float
    u_max: float
    x_max: tuple[float, float]
    f_max: float
    tol_effective: float
    message: str = ""

    @property
    def I(self) -> float:
        return math.exp(self.log_I) if self.log_I < 709 else math.inf

    @property
    def bubble_scale(self) -> float:
        """``sqrt(8/max f)``: width of a Liouville bubble with the same peak curvature."""
        return math.sqrt(8.0 / self.f_max) if self.f_max > 0 else math.inf

    def invariant_violations(self, measure: IntensityMeasure | None = None) -> list[str]:
        bad = []
        if self.u.values.size and self.u.values.min() < -1e-10:
            bad.append("u < -1e-10 somewhere")
        if self.nu_total > self.lam + 1e-8:
            bad.append("nu(Omega) exceeds lambda")
        if self.log_I < math.log(self.u.domain.area) - 1e-8 / self.u.domain.area:
            bad.append("iint e^{alpha u} below |Omega|")
        return bad

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "log_I": self.log_I,
            "nu_total": self.nu_total,
            "u_max": self.u_max,
            "x_max": list(self.x_max),
            "bubble_scale": self.bubble_scale,
            "tol_effective": self.tol_effective,
        }


def _attainable(dom: DiscreteDomain, uv: NDArray, f: NDArray, tol: float) -> float:
    """Tolerance floored at the rounding level of evaluating ``A u - f``."""
    dmax = float(dom._diag.max()) if dom.n else 0.0
    umax = float(np.abs(uv).max()) if uv.size else 0.0
    fmax = float(np.abs(f).max()) if f.size else 0.0
    # cap the cut-cell contribution: those rows multiply values of order theta*h
    dmax = min(dmax, 8.0 / dom.h**2)
    return max(tol, 4.0 * EPS * (dmax * umax + fmax))


class _LinearSolver:
    def __init__(self, dom: DiscreteDomain, lam: float, terms: Terms, method: str):
        self.dom, self.lam, self.t, self.method = dom, lam, terms, method
        self.c = lam * dom.h**2
        self.used = method

    def _gmres(self, rhs: NDArray) -> NDArray:
        dom, t, c = self.dom, self.t, self.c
        lu = dom.factorized()

        def mv(x):
            return dom.matrix @ x - t.v * x + c * t.g * float(t.g @ x)

        op = spla.LinearOperator(dom.matrix.shape, matvec=mv)
        prec = spla.LinearOperator(dom.matrix.shape, matvec=lu.solve)
        x, info = spla.gmres(op, rhs, M=prec, rtol=1e-12, atol=0.0, restart=100, maxiter=10)
        self.used = "gmres"
        return x

    def solve(self, rhs: NDArray) -> NDArray:
        if self.method == "gmres" or self.lam == 0.0:
            if self.lam == 0.0:
                return self.dom.factorized().solve(rhs)
            return self._gmres(rhs)
        dom, t, c = self.dom, self.t, self.c
        M = (dom.matrix - sp.diags(t.v)).tocsc()
        try:
            # the stencil is symmetric, so a symmetric ordering keeps the fill low
            lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.1, options={"SymmetricMode": True})
            y = lu.solve(rhs)
            z = lu.solve(t.g)
        except RuntimeError:
            return self._gmres(rhs)
        gz = c * float(t.g @ z)
        den = 1.0 + gz
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))) or abs(den) < 1e-8 * max(1.0, abs(gz)):
            return self._gmres(rhs)
        x = y - z * (c * float(t.g @ y)) / den
        # one step of refinement guards against a nearly singular local part
        r = rhs - (dom.matrix @ x - t.v * x + c * t.g * float(t.g @ x))
        if np.abs(r).max() > 1e-8 * max(np.abs(rhs).max(), 1e-300):
            dy = lu.solve(r)
            x = x + dy - z * (c * float(t.g @ dy)) / den
        return x


def newton_solve(
    u0: Field,
    lam: float,
    measure: IntensityMeasure,
    config: SolveConfig | None = None,
) -> SolveResult:
    """Damped Newton iteration for ``-Lap u = f(u)``.

    Returns the best iterate with ``converged=False`` when the tolerance is not
    reached; raises nothing for ordinary numerical failure.
    """
    cfg = config or SolveConfig()
    dom = u0.domain
    u = u0.values.copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("initial guess must be finite")

    def resid(uv):
        t = evaluate_terms(Field(dom, uv), lam, measure)
        return t, dom.apply(uv) - t.f

    terms, F = resid(u)
    rn = float(np.abs(F).max()) if F.size else 0.0
    tol = _attainable(dom, u, terms.f, cfg.tol)
    it = 0
    grew = 0
    msg = "converged"
    while rn > tol:
        if it >= cfg.max_iter:
            msg = "maximum iterations reached"
            break
        it += 1
        step = _LinearSolver(dom, lam, terms, cfg.linear_solver).solve(-F)
        if not np.all(np.isfinite(step)):
            msg = "linear solve failed"
            break
        s = 1.0
        best = None
        while s >= cfg.min_damping:
            trial = u + s * step
            try:
                t2, F2 = resid(trial)
            except (FloatingPointError, OverflowError):
                s *= 0.5
                continue
            r2 = float(np.abs(F2).max())
            if best is None or r2 < best[0]:
                best = (r2, trial, t2, F2)
            if r2 < rn:
                break
            s *= 0.5
        if best is None:
            msg = "line search produced no finite iterate"
            break
        r2, trial, t2, F2 = best
        grew = grew + 1 if r2 >= rn else 0
        u, terms, F, rn = trial, t2, F2, r2
        tol = _attainable(dom, u, terms.f, cfg.tol)
        if grew >= cfg.divergence_window:
            msg = "diverged: residual grew over consecutive damped steps"
            break
    converged = rn <= tol
    if not converged and msg == "converged":
        msg = "not converged"
    fld = Field(dom, u)
    k = int(np.argmax(u)) if u.size else 0
    return SolveResult(
        u=fld,
        lam=float(lam),
        residual=rn,
        iterations=it,
        converged=converged,
        log_I=terms.log_I,
        nu_total=terms.nu_total,
        u_max=float(u[k]) if u.size else 0.0,
        x_max=(float(dom.points[k, 0]), float(dom.points[k, 1])) if u.size else (0.0, 0.0),
        f_max=float(terms.f.max()) if u.size else 0.0,
        tol_effective=tol,
        message=msg,
    )


@dataclass
class ContinuationBranch:
    """Solutions along increasing lambda.

    ``flag`` is ``None`` when ``lambda_end`` was reached, ``"nonconvergence"``
    when the step fell below its minimum, and ``"unresolved"`` when the peak
    scale dropped below ``min_resolved_scale`` grid cells.
    """

    entries: list[SolveResult] = field(default_factory=list)
    flag: str | None = None
    last_good_lambda: float | None = None
    lambda_end: float | None = None
    measure: IntensityMeasure | None = None

    @property
    def lambdas(self) -> NDArray:
        return np.array([e.lam for e in self.entries])

    @property
    def u_max(self) -> NDArray:
        return np.array([e.u_max for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def continue_lambda(
    lambda_start: float,
    lambda_end: float,
    measure: IntensityMeasure,
    domain: DiscreteDomain,
    config: SolveConfig | None = None,
    callback: Callable[[SolveResult], None] | None = None,
) -> ContinuationBranch:
    """Follow the solution branch from ``lambda_start`` toward ``lambda_end``."""
    if not lambda_start < lambda_end:
        raise ValueError("lambda_start must be below lambda_end")
    cfg = config or SolveConfig()
    br = ContinuationBranch(lambda_end=lambda_end, measure=measure)
    first = _reach(lambda_start, measure, domain, cfg)
    if first is None:
        br.flag = "nonconvergence"
        return br
    br.entries.append(first)
    if callback:
        callback(first)
    br.last_good_lambda = first.lam
    cur = first
    dlam = cfg.dlam
    inner = replace(cfg, max_iter=min(cfg.max_iter, 15))
    while cur.lam < lambda_end:
        tan = tangent(cur, measure)
        tn = float(np.abs(tan).max()) if tan.size else 0.0
        if tn > 0:
            # keep the predicted change in sup norm well inside the jump limit
            dlam = min(dlam, 0.5 * cfg.max_jump / tn)
        if dlam < cfg.dlam_min:
            br.flag = "nonconvergence"
            break
        lam_next = min(cur.lam + dlam, lambda_end)
        if lambda_end - lam_next < 1e-12 * max(1.0, lambda_end):
            lam_next = lambda_end
        guess = cur.u.values + (lam_next - cur.lam) * tan
        res = newton_solve(Field(domain, guess), lam_next, measure, inner)
        if not res.converged or res.u_max - cur.u_max > cfg.max_jump:
            dlam *= cfg.shrink
            continue
        if res.bubble_scale < cfg.min_resolved_scale * domain.h:
            br.flag = "unresolved"
            break
        br.entries.append(res)
        if callback:
            callback(res)
        br.last_good_lambda = res.lam
        cur = res
        dlam = min(dlam * cfg.grow, cfg.dlam_max)
    return br


def result_from_field(u: Field, lam: float, measure: IntensityMeasure) -> SolveResult:
    """Wrap a stored field as a :class:`SolveResult` (residual re-evaluated)."""
    t = evaluate_terms(u, lam, measure, jacobian=False)
    dom = u.domain
    F = dom.apply(u.values) - t.f
    rn = float(np.abs(F).max()) if F.size else 0.0
    tol = _attainable(dom, u.values, t.f, SolveConfig().tol)
    k = int(np.argmax(u.values)) if u.values.size else 0
    return SolveResult(
        u=u,
        lam=float(lam),
        residual=rn,
        iterations=0,
        converged=rn <= tol,
        log_I=t.log_I,
        nu_total=t.nu_total,
        u_max=float(u.values[k]) if u.values.size else 0.0,
        x_max=(float(dom.points[k, 0]), float(dom.points[k, 1])) if u.values.size else (0.0, 0.0),
        f_max=float(t.f.max()) if u.values.size else 0.0,
        tol_effective=tol,
        message="loaded",
    )


def tangent(res: SolveResult, measure: IntensityMeasure) -> NDArray:
    """``du/dlam`` along the branch: solves ``J u' = S1/D``."""
    t = evaluate_terms(res.u, res.lam, measure)
    return _LinearSolver(res.u.domain, res.lam, t, "sherman_morrison").solve(t.g)


def _reach(lam: float, measure: IntensityMeasure, domain: DiscreteDomain, cfg: SolveConfig) -> SolveResult | None:
    """Solve at ``lam`` from zero, walking up in lambda if a direct solve fails."""
    res = newton_solve(Field.zeros(domain), lam, measure, cfg)
    if res.converged:
        return res
    if lam <= 0:
        return None
    inner = replace(cfg, dlam=min(cfg.dlam, lam / 4))
    br = continue_lambda(0.0, lam, measure, domain, inner)
    if br.flag is None and br.entries and br.entries[-1].lam == lam:
        return br.entries[-1]
    return None



def _amplitude_newton(
    u0: NDArray, lam0: float, k: int, s: float, measure: IntensityMeasure, dom: DiscreteDomain, cfg: SolveConfig
) -> SolveResult:
    """Bordered Newton for ``(u, lam)`` with ``u[k] = s`` held fixed."""
    u, lam = u0.copy(), float(lam0)

    def resid(uv, lv):
        t = evaluate_terms(Field(dom, uv), lv, measure)
        F = dom.apply(uv) - t.f
        return t, F, max(float(np.abs(F).max()), abs(uv[k] - s))

    terms, F, rn = resid(u, lam)
    tol = _attainable(dom, u, terms.f, cfg.tol)
    it = 0
    msg = "converged"
    while rn > tol:
        if it >= cfg.max_iter:
            msg = "maximum iterations reached"
            break
        it += 1
        ls = _LinearSolver(dom, lam, terms, cfg.linear_solver)
        a = ls.solve(-F)
        b = ls.solve(terms.g)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))) or b[k] == 0:
            msg = "linear solve failed"
            break
        dl = (s - u[k] - a[k]) / b[k]
        du = a + dl * b
        step = 1.0
        best = None
        while step >= cfg.min_damping:
            try:
                t2, F2, r2 = resid(u + step * du, lam + step * dl)
            except (FloatingPointError, OverflowError):
                step *= 0.5
                continue
            if best is None or r2 < best[0]:
                best = (r2, step, t2, F2)
            if r2 < rn:
                break
            step *= 0.5
        if best is None:
            msg = "line search produced no finite iterate"
            break
        r2, step, terms, F = best
        u, lam = u + step * du, lam + step * dl
        grew = r2 >= rn
        rn = r2
        tol = _attainable(dom, u, terms.f, cfg.tol)
        if grew and step < 1e-3:
            msg = "stalled"
            break
    conv = rn <= tol
    if not conv and msg == "converged":
        msg = "not converged"
    j = int(np.argmax(u))
    return SolveResult(
        u=Field(dom, u),
        lam=lam,
        residual=rn,
        iterations=it,
        converged=conv,
        log_I=terms.log_I,
        nu_total=terms.nu_total,
        u_max=float(u[j]),
        x_max=(float(dom.points[j, 0]), float(dom.points[j, 1])),
        f_max=float(terms.f.max()),
        tol_effective=tol,
        message=msg,
    )


def continue_amplitude(
    start: SolveResult,
    u_max_end: float,
    measure: IntensityMeasure,
    config: SolveConfig | None = None,
    ds: float = 0.25,
    callback: Callable[[SolveResult], None] | None = None,
) -> ContinuationBranch:
    """Follow the branch past folds in lambda by prescribing the peak value.

    Each step fixes ``u`` at the peak node and solves for ``(u, lam)``; lambda
    may decrease along the way. Stops with ``"unresolved"`` when the bubble
    scale drops below ``min_resolved_scale`` grid cells.
    """
    cfg = config or SolveConfig()
    dom = start.u.domain
    inner = replace(cfg, max_iter=min(cfg.max_iter, 15))
    br = ContinuationBranch(entries=[start], lambda_end=None, measure=measure, last_good_lambda=start.lam)
    cur = start
    ds_min = 1e-3
    while cur.u_max < u_max_end:
        if ds < ds_min:
            br.flag = "nonconvergence"
            break
        k = int(np.argmax(cur.u.values))
        t = evaluate_terms(cur.u, cur.lam, measure)
        b = _LinearSolver(dom, cur.lam, t, "sherman_morrison").solve(t.g)
        if not np.isfinite(b[k]) or b[k] == 0:
            br.flag = "nonconvergence"
            break
        step = min(ds, u_max_end - cur.u_max)
        s = cur.u.values[k] + step
        guess = cur.u.values + step * b / b[k]
        res = _amplitude_newton(guess, cur.lam + step / b[k], k, s, measure, dom, inner)
        if not res.converged or res.lam <= 0:
            ds *= cfg.shrink
            continue
        if res.bubble_scale < cfg.min_resolved_scale * dom.h:
            br.flag = "unresolved"
            break
        br.entries.append(res)
        if callback:
            callback(res)
        br.last_good_lambda = res.lam
        cur = res
        ds = min(ds * cfg.grow, 1.0)
    return br
