"""Moment maps, the Vandermonde-type map and min-max sampling.

``vandermonde_map`` sends ``z in C^k`` to the vector with rows
``sum_i z_i^j |z_i|^{2-j}`` (``j = 1..k``), i.e. ``sum_i |z_i|^2 e^{i j theta_i}``.
Its Brouwer degree on the unit ball is computed by counting oriented
preimages of a small regular value; the map is homogeneous of degree two, so
preimages of ``y`` are ``sqrt|y|`` times preimages of ``y/|y|``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .domain import DiscreteDomain, DomainError, EmbeddedCurve, Field, chi_power_integral
from .energy import j_lambda, log_integral
from .measure import IntensityMeasure
from .profiles import BarycenterProfile, Profile

Function = Union[Field, Profile]


# -- moment maps --------------------------------------------------------------


def moment_map(
    u: Function,
    curve: EmbeddedCurve,
    j: int,
    measure: IntensityMeasure,
    domain: DiscreteDomain | None = None,
    chi_integral: complex | None = None,
) -> complex:
    """``m_j(u) = int chi^j dmu(u)`` for the normalized density ``mu(u)``.

    ``chi_integral`` is ``int_Omega chi^j``; it is computed from ``domain``
    when not given.
    """
    if j < 1:
        raise ValueError("j must be positive")
    dom = domain if domain is not None else (u.domain if isinstance(u, Field) else None)
    if chi_integral is None:
        if dom is None:
            raise ValueError("a domain or chi_integral is required")
        chi_integral = chi_power_integral(dom, curve, j)
    if isinstance(u, Profile):
        return u.moment(measure, curve, j, chi_integral)
    top = max(measure.sup_support(), 0.0)
    shift = max(0.0, top * float(u.values.max())) if u.values.size else 0.0
    s0 = measure.exp_sums(u.values, shift, mmax=0)[0]
    cj = curve.chi(dom.points) ** j
    h2 = dom.h**2
    flat = math.exp(-shift)
    # the uncovered strip carries u = 0
    strip_chi = chi_integral - h2 * cj.sum()
    num = h2 * (cj * s0).sum() + strip_chi * flat
    den = h2 * s0.sum() + dom.strip_area * flat
    return complex(num / den)


def moment_vector(u: Function, curve: EmbeddedCurve, k: int, measure: IntensityMeasure, domain: DiscreteDomain) -> NDArray:
    chis = [chi_power_integral(domain, curve, j) for j in range(1, k + 1)]
    return np.array([moment_map(u, curve, j, measure, domain, chis[j - 1]) for j in range(1, k + 1)])


# -- the Vandermonde-type map ---------------------------------------------------


def vandermonde_map(z: ArrayLike, conjugate: bool = False) -> NDArray:
    """Rows ``sum_i |z_i|^2 (z_i/|z_i|)^j``; zero entries contribute nothing.

    ``conjugate=True`` replaces ``z`` by its conjugate (orientation control).
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if conjugate:
        z = np.conj(z)
    r2 = (z * np.conj(z)).real
    ph = np.where(r2 > 0, z / np.where(r2 > 0, np.sqrt(r2), 1.0), 0.0)
    j = np.arange(1, len(z) + 1)[:, None]
    return (r2[None, :] * ph[None, :] ** j).sum(axis=1)


def _polar_system(rho: NDArray, th: NDArray, target: NDArray, conj: bool) -> tuple[NDArray, NDArray]:
    """Residual and real Jacobian in the variables ``(rho_1, th_1, ..., rho_k, th_k)``."""
    k = len(rho)
    s = -1.0 if conj else 1.0
    j = np.arange(1, k + 1)[:, None]
    e = np.exp(1j * s * j * th[None, :])
    F = (rho[None, :] ** 2 * e).sum(axis=1) - target
    dr = 2 * rho[None, :] * e
    dt = 1j * s * j * rho[None, :] ** 2 * e
    Jc = np.empty((k, 2 * k), dtype=complex)
    Jc[:, 0::2], Jc[:, 1::2] = dr, dt
    Jr = np.empty((2 * k, 2 * k))
    Jr[0::2], Jr[1::2] = Jc.real, Jc.imag
    Fr = np.empty(2 * k)
    Fr[0::2], Fr[1::2] = F.real, F.imag
    return Fr, Jr


def _newton_polar(rho, th, target, conj, max_iter=100, tol=1e-13):
    for _ in range(max_iter):
        F, J = _polar_system(rho, th, target, conj)
        if np.abs(F).max() < tol:
            return rho, th, True
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return rho, th, False
        step = 1.0
        n0 = np.abs(F).max()
        while step > 1e-6:
            r2, t2 = rho + step * d[0::2], th + step * d[1::2]
            if np.all(r2 > 0) and np.abs(_polar_system(r2, t2, target, conj)[0]).max() < n0:
                break
            step *= 0.5
        else:
            return rho, th, False
        rho, th = r2, t2
    F, _ = _polar_system(rho, th, target, conj)
    return rho, th, bool(np.abs(F).max() < tol)


@dataclass
class DegreeResult:
    k: int
    degree: int | None
    degrees: list[int]
    regular_values: list[list[float]]
    roots: list[list[dict]]
    stable: bool
    conjugate: bool
    message: str

    def as_dict(self) -> dict:
        return asdict(self)


def preimages(y0: ArrayLike, conjugate: bool = False, n_starts: int = 200, rng: np.random.Generator | None = None) -> list[dict]:
    """Oriented solutions of ``Phi_k(z) = y0`` found by multistart Newton."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=complex))
    k = len(y0)
    rng = rng if rng is not None else np.random.default_rng(0)
    scale = float(np.linalg.norm(y0))
    target = y0 / scale
    found: list[tuple[NDArray, int]] = []
    for _ in range(n_starts):
        rho = np.sqrt(rng.uniform(0.05, 1.5, k))
        th = rng.uniform(0, 2 * np.pi, k)
        rho, th, ok = _newton_polar(rho, th, target, conjugate)
        if not ok:
            continue
        z = rho * np.exp(1j * th)
        if any(np.abs(z - w).max() < 1e-8 for w, _ in found):
            continue
        _, J = _polar_system(rho, th, target, conjugate)
        det = np.linalg.det(J)
        # the polar-to-Cartesian change of variables has Jacobian prod(rho) > 0
        found.append((z, int(np.sign(det))))
    out = []
    for w, sgn in found:
        z = w * math.sqrt(scale)
        out.append({"z": [[float(c.real), float(c.imag)] for c in z], "sign": sgn, "inside": bool(np.linalg.norm(z) < 1)})
    return out


def brouwer_degree(
    k: int,
    n_values: int = 5,
    radius: float = 1e-3,
    conjugate: bool = False,
    n_starts: int | None = None,
    rng: np.random.Generator | None = None,
) -> DegreeResult:
    """``deg(Phi_k, D_k, 0)`` as the signed preimage count of small regular values."""
    if k not in (1, 2):
        raise ValueError("degree computation is supported for k = 1, 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    n_starts = n_starts or (50 if k == 1 else 400)
    degs, vals, roots = [], [], []
    for _ in range(n_values):
        v = rng.normal(size=k) + 1j * rng.normal(size=k)
        y0 = radius * v / np.linalg.norm(v)
        pre = preimages(y0, conjugate, n_starts, rng)
        degs.append(int(sum(p["sign"] for p in pre if p["inside"])))
        vals.append([float(x) for c in y0 for x in (c.real, c.imag)])
        roots.append(pre)
    stable = len(set(degs)) == 1
    return DegreeResult(
        k=k,
        degree=degs[0] if stable else None,
        degrees=degs,
        regular_values=vals,
        roots=roots,
        stable=stable,
        conjugate=conjugate,
        message="stable" if stable else "inconclusive: counts differ across regular values",
    )


def winding_number(conjugate: bool = False, n: int = 4096) -> int:
    """Winding of ``Phi_1`` restricted to the unit circle around 0."""
    th = np.linspace(0, 2 * np.pi, n + 1)
    w = np.array([vandermonde_map([np.exp(1j * t)], conjugate)[0] for t in th])
    d = np.diff(np.unwrap(np.angle(w)))
    return int(round(d.sum() / (2 * np.pi)))


def boundary_min_modulus(k: int, n: int = 10_000, rng: np.random.Generator | None = None) -> float:
    """``min |Phi_k|`` over random points of the unit sphere of ``C^k``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    v = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return float(min(np.linalg.norm(vandermonde_map(z)) for z in v))


# -- power-sum system ---------------------------------------------------------


@dataclass(frozen=True)
class PowerSumSolution:
    z: NDArray
    residual: float
    converged: bool


def power_sums(betas: ArrayLike, z: ArrayLike) -> NDArray:
    b = np.asarray(betas, dtype=float)
    z = np.asarray(z, dtype=complex)
    j = np.arange(1, len(z) + 1)[:, None]
    return (b[None, :] * z[None, :] ** j).sum(axis=1)


def vandermonde_solve(
    betas: ArrayLike,
    y: ArrayLike,
    n_starts: int = 64,
    tol: float = 1e-10,
    rng: np.random.Generator | None = None,
) -> PowerSumSolution:
    """Smallest-norm solution of ``sum_i beta_i z_i^j = y_j``, ``j = 1..l``."""
    b = np.asarray(betas, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    ell = len(b)
    if len(y) != ell:
        raise ValueError("betas and y must have equal length")
    if np.any(b <= 0):
        raise ValueError("betas must be positive")
    if ell > 4:
        raise ValueError("at most four unknowns are supported")
    if not np.any(y):
        return PowerSumSolution(np.zeros(ell, dtype=complex), 0.0, True)
    if ell == 1:
        z = y / b[0]
        return PowerSumSolution(z, float(abs(b[0] * z[0] - y[0])), True)
    # rescale so the data has unit size: z = s w, y_j = s^j yhat_j
    s = max(abs(y[j]) ** (1.0 / (j + 1)) for j in range(ell))
    yh = y / s ** np.arange(1, ell + 1)
    rng = rng if rng is not None else np.random.default_rng(0)
    j = np.arange(1, ell + 1)[:, None]
    best = None
    for _ in range(n_starts):
        w = rng.normal(size=ell) + 1j * rng.normal(size=ell)
        for _ in range(100):
            F = power_sums(b, w) - yh
            if np.abs(F).max() < 1e-15:
                break
            J = j * b[None, :] * w[None, :] ** (j - 1)
            try:
                w = w - np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(w)):
                break
        if not np.all(np.isfinite(w)):
            continue
        r = float(np.abs(power_sums(b, w) - yh).max())
        if r < 1e-12 and (best is None or np.linalg.norm(w) < np.linalg.norm(best) - 1e-12):
            best = w
    if best is None:
        return PowerSumSolution(np.full(ell, np.nan + 0j), math.inf, False)
    z = s * best
    res = float(np.abs(power_sums(b, z) - y).max())
    return PowerSumSolution(z, res, res <= tol)


def continuity_curve(betas: ArrayLike, direction: ArrayLike, norms: Sequence[float], rng=None) -> list[tuple[float, float]]:
    """``(|y|, |z|)`` along ``y = t * direction`` for the smallest-norm solutions."""
    d = np.asarray(direction, dtype=complex)
    d = d / np.linalg.norm(d)
    out = []
    for t in norms:
        sol = vandermonde_solve(betas, t * d, rng=rng if rng is not None else np.random.default_rng(0))
        out.append((float(t), float(np.linalg.norm(sol.z))))
    return out


# -- the min-max family -------------------------------------------------------


def cutoff(t: float) -> float:
    """Smoothstep: 0 on ``[0, 1/3]``, 1 on ``[2/3, 1]``."""
    x = min(max(3.0 * t - 1.0, 0.0), 1.0)
    return x * x * (3.0 - 2.0 * x)


def family_h_profile(z: ArrayLike, curve: EmbeddedCurve, area: float, alpha_tilde: float = 0.95) -> BarycenterProfile:
    """``eta(|z|) u_{|z|^2, sigma(z)}`` with ``sigma(z) = sum |z_i|^2 delta_{gamma(arg z_i)} / |z|^2``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    nz = float(np.linalg.norm(z))
    if not nz < 1:
        raise ValueError("|z| must be below 1")
    eta = cutoff(nz)
    if nz == 0.0:
        return BarycenterProfile(curve.gamma(np.zeros(1)), [1.0], 0.0, curve.eps0, alpha_tilde, area, 0.0)
    th = np.where(np.abs(z) > 0, np.angle(z), 0.0)
    t = np.abs(z) ** 2 / nz**2
    return BarycenterProfile(curve.gamma(th), t, nz**2, curve.eps0, alpha_tilde, area, eta)


def family_h(
    z: ArrayLike,
    lam: float,
    curve: EmbeddedCurve,
    domain: DiscreteDomain,
    measure: IntensityMeasure | None = None,
    alpha_tilde: float = 0.95,
    min_core_cells: float = 4.0,
) -> Field:
    """Grid samples of the min-max family member at ``z``."""
    return family_h_profile(z, curve, domain.area, alpha_tilde).sample(domain, min_core_cells)


def sample_ball(k: int, n_radial: int = 12, n_angular: int = 16, boundary: float = 0.999) -> list[NDArray]:
    """Radial-angular samples of ``D_k`` with radii graded toward 1."""
    radii = list(np.linspace(0.0, 0.9, n_radial))
    m = 1
    while 1 - 0.1 * 2.0**-m > radii[-1] and 1 - 0.1 * 2.0**-m < boundary:
        radii.append(1 - 0.1 * 2.0**-m)
        m += 1
    radii.append(boundary)
    th = 2 * np.pi * np.arange(n_angular) / n_angular
    pts = []
    for r in radii:
        if r == 0:
            pts.append(np.zeros(k, dtype=complex))
            continue
        if k == 1:
            pts.extend(np.array([r * np.exp(1j * a)]) for a in th)
        else:
            for phi in np.linspace(0, np.pi / 2, 5):
                for a in th[:: max(1, n_angular // 8)]:
                    for b in th[:: max(1, n_angular // 8)]:
                        pts.append(r * np.array([math.cos(phi) * np.exp(1j * a), math.sin(phi) * np.exp(1j * b)]))
    return pts


@dataclass
class MinmaxReport:
    k: int
    lam: float
    sup: float
    argmax: list[list[float]]
    argmax_norm: float
    argmax_log_integral: float
    interior_sup: float
    boundary_max: float
    margin: float
    moment_error: float
    excluded: int
    samples: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def minmax_upper_bound(
    k: int,
    lam: float,
    curve: EmbeddedCurve,
    domain: DiscreteDomain,
    measure: IntensityMeasure,
    alpha_tilde: float = 0.95,
    samples: Sequence[NDArray] | None = None,
    boundary: float = 0.999,
    interior: float = 0.95,
) -> MinmaxReport:
    """``sup J_lam(h(z))`` over samples of ``D_k`` plus the boundary diagnostics.

    Profiles are evaluated with adapted quadrature, so no sample is excluded
    for resolution; ``excluded`` counts samples whose evaluation failed.
    """
    if not 8 * k * math.pi < lam < 8 * (k + 1) * math.pi:
        raise ValueError("lambda must lie in (8 k pi, 8 (k+1) pi)")
    if not (2 * alpha_tilde - 1) * lam > 8 * k * math.pi:
        raise ValueError("alpha_tilde too small for this lambda")
    pts = list(samples) if samples is not None else sample_ball(k, boundary=boundary)
    chis = [chi_power_integral(domain, curve, j) for j in range(1, k + 1)]
    rows, excluded = [], 0
    moment_err = 0.0
    for z in pts:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        nz = float(np.linalg.norm(z))
        try:
            prof = family_h_profile(z, curve, domain.area, alpha_tilde)
            J = j_lambda(prof, lam, measure)
            L = log_integral(prof, measure)
        except (DomainError, FloatingPointError, OverflowError, ValueError):
            excluded += 1
            continue
        row = {"z": [[float(c.real), float(c.imag)] for c in z], "norm": nz, "J": float(J), "log_integral": float(L)}
        if nz >= boundary - 1e-12:
            m = np.array([prof.moment(measure, curve, j, chis[j - 1]) for j in range(1, k + 1)])
            err = float(np.abs(m - vandermonde_map(z)).max())
            row["moment_error"] = err
            moment_err = max(moment_err, err)
        rows.append(row)
    if not rows:
        raise DomainError("every sample was excluded")
    best = max(rows, key=lambda r: r["J"])
    inner = [r["J"] for r in rows if r["norm"] <= interior]
    bnd = [r["J"] for r in rows if r["norm"] >= boundary - 1e-12]
    isup = max(inner) if inner else math.nan
    bmax = max(bnd) if bnd else math.nan
    return MinmaxReport(
        k=k,
        lam=lam,
        sup=best["J"],
        argmax=best["z"],
        argmax_norm=best["norm"],
        argmax_log_integral=best["log_integral"],
        interior_sup=isup,
        boundary_max=bmax,
        margin=isup - bmax,
        moment_error=moment_err,
        excluded=excluded,
        samples=rows,
    )
