"""Concentration diagnostics along solution branches.

Peak detection and local masses of the vortex density, the Pohozaev residual
of the limiting intensity atoms, the two blow-up rescalings (with and without
an atom of ``P`` at 1), Liouville-bubble fitting, and mass extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage, optimize, signal

from .domain import DiscreteDomain, DomainError, Field
from .measure import IntensityMeasure, _piece_moments
from .profiles import Profile, radial_rule
from .solver import ContinuationBranch, SolveResult, evaluate_terms

EIGHT_PI = 8.0 * math.pi


# -- densities and peaks ------------------------------------------------------


def vortex_density(u: Field, lam: float, measure: IntensityMeasure) -> Field:
    """``lam int alpha e^{alpha u} P / iint e^{alpha u} P`` as a field."""
    return Field(u.domain, evaluate_terms(u, lam, measure, jacobian=False).f)


def vortex_total(u: Field, lam: float, measure: IntensityMeasure) -> float:
    """``nu(Omega)`` including the boundary strip."""
    return evaluate_terms(u, lam, measure, jacobian=False).nu_total


@dataclass(frozen=True)
class Peak:
    point: tuple[float, float]
    index: int
    value: float
    mass: float


def _local_maxima(density: Field, threshold: float) -> list[int]:
    dom = density.domain
    g = np.full(dom.shape, -np.inf)
    g[dom.inside] = density.values
    fp = np.ones((3, 3), dtype=bool)
    fp[1, 1] = False
    # exterior nodes are -inf, so they never block a maximum
    nb_max = ndimage.maximum_filter(g, footprint=fp, mode="constant", cval=-np.inf)
    gi = np.where(np.isfinite(g), g, np.inf)
    nb_min = ndimage.minimum_filter(gi, footprint=fp, mode="constant", cval=np.inf)
    # a maximum must dominate its neighbours and strictly exceed at least one
    cand = dom.inside & (g >= nb_max) & (nb_min < g) & (g >= threshold)
    # plateau ties: keep the first node in raster order
    lab, n = ndimage.label(cand, structure=np.ones((3, 3)))
    out = []
    for k in range(1, n + 1):
        ii, jj = np.nonzero(lab == k)
        out.append(int(dom.index[ii[0], jj[0]]))
    return out


def default_cluster_radius(points: Sequence[ArrayLike], domain: DiscreteDomain) -> float:
    """``max(8h, quarter of the minimum peak separation)``; a lone peak uses half its boundary distance."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return 8 * domain.h
    if len(pts) == 1:
        return max(8 * domain.h, 0.5 * float(domain.distance_to_boundary(pts)[0]))
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    d[np.diag_indices_from(d)] = np.inf
    return max(8 * domain.h, 0.25 * float(d.min()))


def detect_peaks(density: Field, threshold_fraction: float = 0.1, rho: float | None = None) -> tuple[list[Peak], float]:
    """Local maxima above ``threshold_fraction * max`` and their ball masses.

    Peaks are taken by decreasing height and kept only when ``2 rho`` away
    from every kept peak. Masses integrate over ``B_rho(p_i)`` minus the
    balls of higher peaks.
    """
    dom = density.domain
    v = density.values
    if v.size == 0:
        return [], rho or 8 * dom.h
    top = float(v.max())
    if not top > 0:
        return [], rho or 8 * dom.h
    cand = sorted(_local_maxima(density, threshold_fraction * top), key=lambda i: -v[i])
    if rho is None:
        rho = default_cluster_radius(dom.points[cand], dom) if cand else 8 * dom.h
    kept: list[int] = []
    for i in cand:
        p = dom.points[i]
        if all(math.hypot(*(p - dom.points[j])) >= 2 * rho for j in kept):
            kept.append(i)
    taken = np.zeros(dom.n, dtype=bool)
    peaks = []
    h2 = dom.h**2
    for i in kept:
        p = dom.points[i]
        ball = (np.hypot(dom.points[:, 0] - p[0], dom.points[:, 1] - p[1]) < rho) & ~taken
        taken |= ball
        peaks.append(Peak((float(p[0]), float(p[1])), i, float(v[i]), float(h2 * v[ball].sum())))
    return peaks, float(rho)


def ball_mask(domain: DiscreteDomain, center: ArrayLike, rho: float) -> NDArray:
    c = np.asarray(center, dtype=float)
    return np.hypot(domain.points[:, 0] - c[0], domain.points[:, 1] - c[1]) < rho


# -- intensity atoms at a peak ------------------------------------------------


def pohozaev_residual(zeta: Sequence[tuple[float, float]]) -> float:
    """``8 pi int zeta - (int alpha zeta)^2`` for an atom list ``(alpha_j, mass_j)``."""
    if any(m < 0 for _, m in zeta):
        raise ValueError("masses must be nonnegative")
    total = math.fsum(m for _, m in zeta)
    first = math.fsum(a * m for a, m in zeta)
    return EIGHT_PI * total - first * first


def zeta_at(u: Field, lam: float, measure: IntensityMeasure, mask: NDArray, bins: int = 16) -> list[dict]:
    """Split the mass ``mu(B) = lam int_B e^{alpha u} P / I`` over intensities.

    Atoms are kept exact; each density piece is cut into ``bins`` sub-pieces
    reported at their midpoints. ``nu`` is the matching vortex mass.
    """
    dom = u.domain
    t = evaluate_terms(u, lam, measure, jacobian=False)
    top = max(measure.sup_support(), 0.0)
    shift = max(0.0, top * float(u.values.max()))
    lognorm = t.log_I
    uv = u.values[mask]
    h2 = dom.h**2
    out = []
    for a, w in zip(*measure.atom_arrays):
        s = h2 * float((w * np.exp(a * uv - shift)).sum())
        mu = lam * s * math.exp(shift - lognorm)
        out.append({"alpha": float(a), "mu": mu, "nu": a * mu})
    sh = np.full(uv.shape, shift)
    for a, b, va, vb, mid in measure.alpha_bins(bins):
        m0, m1 = _piece_moments(uv, a, b, va, vb, sh, 1)
        scale = lam * h2 * math.exp(shift - lognorm)
        out.append({"alpha": float(mid), "mu": scale * float(m0.sum()), "nu": scale * float(m1.sum())})
    return out


# -- rescalings ---------------------------------------------------------------


@dataclass
class RescaledProfile:
    """``w(y)`` sampled on a square window ``|y_1|, |y_2| <= radius``."""

    y: NDArray
    values: NDArray
    sigma: float
    center: tuple[float, float]
    radius: float
    alpha_n: float = 1.0
    extras: dict = field(default_factory=dict)

    def points(self) -> NDArray:
        Y1, Y2 = np.meshgrid(self.y, self.y)
        return np.column_stack([Y1.ravel(), Y2.ravel()])


def _window(u: Field, center, sigma: float, radius: float, n: int) -> tuple[NDArray, NDArray]:
    y = np.linspace(-radius, radius, n)
    Y1, Y2 = np.meshgrid(y, y)
    pts = np.column_stack([center[0] + sigma * Y1.ravel(), center[1] + sigma * Y2.ravel()])
    vals = u.interpolate(pts, order=3).reshape(Y1.shape)
    return y, vals


def rescale_nondegenerate(
    u: Field,
    lam: float,
    measure: IntensityMeasure,
    radius: float = 5.0,
    n: int = 101,
    log_I: float | None = None,
) -> RescaledProfile:
    """``w~(y) = w(x_max + sigma y) + 2 log sigma`` with ``w = u - log I``, ``sigma = e^{-w(x_max)/2}``.

    ``w~(0) = 0``; ``extras`` holds ``int e^{w~}`` over the window and the sup
    of ``rho~ = sigma^2/I int_{[0,1)} alpha e^{alpha u} P`` there.
    """
    dom = u.domain
    if log_I is None:
        log_I = evaluate_terms(u, lam, measure, jacobian=False).log_I
    k = int(np.argmax(u.values))
    xm = dom.points[k]
    umax = float(u.values[k])
    sigma = math.exp(-(umax - log_I) / 2)
    if radius * sigma < 2 * dom.h:
        raise DomainError("rescaled window is smaller than two grid cells")
    y, vals = _window(u, xm, sigma, radius, n)
    prof = RescaledProfile(y, vals - umax, sigma, (float(xm[0]), float(xm[1])), radius)
    # window integrals computed on the physical grid
    d = np.maximum(np.abs(dom.points[:, 0] - xm[0]), np.abs(dom.points[:, 1] - xm[1]))
    win = d <= radius * sigma
    uv = u.values[win]
    h2 = dom.h**2
    prof.extras["window_mass"] = float(h2 * np.exp(uv - log_I).sum())
    a, w = measure.atom_arrays
    below = [(aj, wj) for aj, wj in zip(a, w) if aj < 1.0]
    rho = np.zeros_like(uv)
    for aj, wj in below:
        rho += wj * aj * np.exp(aj * uv - log_I)
    for pa, pb, va, vb in measure.pieces:
        rho += _piece_moments(uv, pa, pb, va, vb, np.full(uv.shape, log_I), 1)[1]
    prof.extras["rho_tilde_sup"] = float(sigma**2 * rho.max()) if rho.size else 0.0
    return prof


@dataclass
class DegenerateRescaling:
    profile: RescaledProfile
    alpha_n: float
    sigma: float
    V_at_peak: float
    V_sup: float
    V_bound: float

    @property
    def bound_holds(self) -> bool:
        return self.V_sup <= self.V_bound * (1 + 1e-12)


def alpha_n(measure: IntensityMeasure, t: float) -> float:
    """Exponent with ``e^{alpha_n t} = int alpha e^{alpha t} P``."""
    if not t > 0:
        raise ValueError("alpha_n needs u(x_max) > 0")
    return float(measure.log_weighted_exp(t, 1)) / t


def rescale_degenerate(
    u: Field,
    lam: float,
    measure: IntensityMeasure,
    log_I: float,
    radius: float = 5.0,
    n: int = 101,
) -> DegenerateRescaling:
    """Rescaling with the peak-adapted exponent ``alpha_n``.

    ``sigma^2 = e^{-alpha_n u(x_max) + log I}`` with ``log I`` taken from the
    solver entry; ``V = alpha_n lam int alpha e^{(alpha - alpha_n) u} P``.
    """
    dom = u.domain
    k = int(np.argmax(u.values))
    t = float(u.values[k])
    an = alpha_n(measure, t)
    sigma = math.exp(0.5 * (-an * t + log_I))
    logS1 = np.asarray(measure.log_weighted_exp(u.values, 1))
    V = an * lam * np.exp(logS1 - an * u.values)
    # boundary value (u = 0): alpha_n lam m1
    V_sup = max(float(V.max()), an * lam * measure.mean())
    xm = dom.points[k]
    if radius * sigma < 2 * dom.h:
        raise DomainError("rescaled window is smaller than two grid cells")
    y, vals = _window(u, xm, sigma, radius, n)
    prof = RescaledProfile(y, an * (vals - t), sigma, (float(xm[0]), float(xm[1])), radius, alpha_n=an)
    return DegenerateRescaling(
        profile=prof,
        alpha_n=an,
        sigma=sigma,
        V_at_peak=float(V[k]),
        V_sup=V_sup,
        V_bound=an * lam * (measure.mean() + 1.0),
    )


def rescaling_gap(
    entry: SolveResult, measure: IntensityMeasure, radius: float = 5.0, n: int = 101, aligned: bool = True
) -> float:
    """Sup-norm distance between the two rescaled profiles of one entry.

    The two scales differ by ``e^{(1 - alpha_n) t/2}`` with ``t = u(x_max)``,
    and ``(1 - alpha_n) t -> -log P({1})``, so the raw profiles on their own
    windows (``aligned=False``) approach a fixed nonzero distance when
    ``P({1}) < 1``. With ``aligned=True`` both are sampled at the same physical
    points (the degenerate window) and differ only by the factor ``alpha_n``,
    which tends to zero along a blow-up branch.
    """
    b = rescale_degenerate(entry.u, entry.lam, measure, entry.log_I, radius, n)
    if aligned:
        base = b.profile.values / b.alpha_n
        return float(np.abs(base - b.profile.values).max())
    a = rescale_nondegenerate(entry.u, entry.lam, measure, radius, n, log_I=entry.log_I)
    return float(np.abs(a.values - b.profile.values).max())


# -- bubble fit ---------------------------------------------------------------


def liouville_bubble(y: ArrayLike, delta: float, xi: ArrayLike = (0.0, 0.0)) -> NDArray:
    """``U_{delta,xi}(y) = log(8 delta^2/(delta^2 + |y - xi|^2)^2)``."""
    p = np.atleast_2d(np.asarray(y, dtype=float))
    r2 = (p[:, 0] - xi[0]) ** 2 + (p[:, 1] - xi[1]) ** 2
    return np.log(8 * delta**2) - 2 * np.log(delta**2 + r2)


@dataclass(frozen=True)
class BubbleFit:
    delta: float
    xi: tuple[float, float]
    offset: float
    rms: float
    converged: bool
    mass: float
    window: float

    def as_dict(self) -> dict:
        return asdict(self)


def bubble_mass(delta: float, radius_factor: float = 50.0) -> float:
    """Quadrature of ``int_{|y| < R delta} e^{U_delta}``."""
    R = radius_factor * delta
    s, w = radial_rule(1e-3 * delta, R, delta)
    return float(2 * math.pi * (w @ (8 * delta**2 / (delta**2 + s * s) ** 2)))


def bubble_fit(profile: RescaledProfile | tuple[NDArray, NDArray], window: float = 5.0) -> BubbleFit:
    """Least-squares fit of ``U_{delta,xi} + c`` over ``|y| <= window``."""
    if isinstance(profile, RescaledProfile):
        pts, vals = profile.points(), profile.values.ravel()
    else:
        pts, vals = np.asarray(profile[0], float), np.asarray(profile[1], float).ravel()
    sel = np.hypot(pts[:, 0], pts[:, 1]) <= window
    pts, vals = pts[sel], vals[sel]
    k = int(np.argmax(vals))
    x0 = pts[k]
    # initial width from the value drop at half the window
    far = np.hypot(pts[:, 0] - x0[0], pts[:, 1] - x0[1])
    ring = np.abs(far - 0.5 * window) < 0.1 * window + 1e-12
    drop = float(vals[k] - vals[ring].mean()) if ring.any() else 2.0
    r = 0.5 * window
    # 2 log(1 + r^2/d^2) = drop
    d0 = r / math.sqrt(max(math.expm1(max(drop, 1e-3) / 2), 1e-6))

    def model(p):
        ld, a, b, c = p
        return liouville_bubble(pts, math.exp(ld), (a, b)) + c

    c0 = float(vals[k] - liouville_bubble(x0[None], d0, x0)[0])
    p0 = np.array([math.log(d0), x0[0], x0[1], c0])
    sol = optimize.least_squares(lambda p: model(p) - vals, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    res = model(sol.x) - vals
    delta = math.exp(sol.x[0])
    return BubbleFit(
        delta=delta,
        xi=(float(sol.x[1]), float(sol.x[2])),
        offset=float(sol.x[3]),
        rms=float(np.sqrt(np.mean(res**2))),
        converged=bool(sol.success),
        mass=bubble_mass(delta),
        window=window,
    )


# -- reports ------------------------------------------------------------------


@dataclass
class BlowupReport:
    lam: float
    u_max: float
    rho: float
    regime: str
    peaks: list[Peak]
    residual_mass: float
    nu_total: float
    zeta: list[list[dict]] = field(default_factory=list)
    pohozaev: list[float] = field(default_factory=list)
    fits: list[BubbleFit | None] = field(default_factory=list)
    scale2: float = math.nan
    alpha_shares: list[dict] = field(default_factory=list)
    rescaling: dict = field(default_factory=dict)
    profiles: list[RescaledProfile] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "u_max": self.u_max,
            "rho": self.rho,
            "regime": self.regime,
            "peaks": [asdict(p) for p in self.peaks],
            "residual_mass": self.residual_mass,
            "nu_total": self.nu_total,
            "zeta": self.zeta,
            "pohozaev": self.pohozaev,
            "fits": [f.as_dict() if f else None for f in self.fits],
            "scale2": self.scale2,
            "alpha_shares": self.alpha_shares,
            "rescaling": self.rescaling,
        }


def regime_of(measure: IntensityMeasure, regime: str = "auto") -> str:
    if regime == "auto":
        return "nondegenerate" if measure.mass_at_one() > 0 else "degenerate"
    if regime in ("nondeg", "nondegenerate"):
        return "nondegenerate"
    if regime in ("deg", "degenerate"):
        return "degenerate"
    raise ValueError(f"unknown regime {regime!r}")


def analyze_entry(
    entry: SolveResult,
    measure: IntensityMeasure,
    rho: float | None = None,
    threshold: float = 0.1,
    regime: str = "auto",
    fit: bool = True,
) -> BlowupReport:
    u, lam = entry.u, entry.lam
    dens = vortex_density(u, lam, measure)
    peaks, rho = detect_peaks(dens, threshold, rho)
    nu = entry.nu_total
    reg = regime_of(measure, regime)
    rep = BlowupReport(
        lam=lam,
        u_max=entry.u_max,
        rho=rho,
        regime=reg,
        peaks=peaks,
        residual_mass=nu - sum(p.mass for p in peaks),
        nu_total=nu,
        scale2=entry.bubble_scale**2,
    )
    for p in peaks:
        mask = ball_mask(u.domain, p.point, rho) if len(peaks) == 1 else _greedy_mask(u.domain, peaks, rho, p)
        z = zeta_at(u, lam, measure, mask)
        rep.zeta.append(z)
        rep.pohozaev.append(pohozaev_residual([(a["alpha"], a["mu"]) for a in z]))
        tot = sum(a["nu"] for a in z) or 1.0
        rep.alpha_shares.append({f"{a['alpha']:.6g}": a["nu"] / tot for a in z if a["nu"] > 0})
    if fit and peaks and entry.u_max > 0:
        try:
            if reg == "nondegenerate":
                prof = rescale_nondegenerate(u, lam, measure, log_I=entry.log_I)
                rep.rescaling = {"sigma": prof.sigma, **prof.extras}
            else:
                dr = rescale_degenerate(u, lam, measure, entry.log_I)
                prof = dr.profile
                rep.rescaling = {
                    "sigma": dr.sigma,
                    "alpha_n": dr.alpha_n,
                    "V_at_peak": dr.V_at_peak,
                    "V_sup": dr.V_sup,
                    "V_bound": dr.V_bound,
                }
            rep.profiles.append(prof)
            rep.fits.append(bubble_fit(prof))
        except DomainError as exc:
            rep.fits.append(None)
            rep.rescaling = {"error": str(exc)}
    return rep


def _greedy_mask(domain: DiscreteDomain, peaks: list[Peak], rho: float, target: Peak) -> NDArray:
    taken = np.zeros(domain.n, dtype=bool)
    for p in peaks:
        m = ball_mask(domain, p.point, rho) & ~taken
        if p is target:
            return m
        taken |= m
    return taken


@dataclass
class QuantizationReport:
    verdict: str
    entries: list[dict]
    extrapolated_masses: list[float]
    extrapolated_residual: float
    residual_decreasing: bool
    passed: bool
    variable: str
    tail: int
    alpha_share_end: dict = field(default_factory=dict)
    extrapolated_alpha_share: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def quantization_check(
    branch: ContinuationBranch,
    measure: IntensityMeasure | None = None,
    rho: float | None = None,
    threshold: float = 0.1,
    n_tail: int = 6,
    u_blowup_min: float = 8.0,
    variable: str = "scale2",
    tolerance: float = 0.05,
    regime: str = "auto",
    fit: bool = False,
) -> QuantizationReport:
    """Peak masses along a branch, extrapolated to zero bubble scale.

    ``variable`` selects the extrapolation abscissa: ``scale2`` uses the
    squared bubble scale ``8/max f`` (mass defects are linear in it for
    Liouville-type profiles), ``inv_umax`` uses ``1/||u||_inf``.
    """
    meas = measure or branch.measure
    if meas is None:
        raise ValueError("a measure is required")
    ents = [e for e in branch.entries if e.u_max > 0]
    grows = bool(ents) and (ents[-1].u_max >= u_blowup_min or branch.flag in ("unresolved", "nonconvergence"))
    reports = [analyze_entry(e, meas, rho, threshold, regime, fit=fit) for e in ents]
    rows = []
    for r, e in zip(reports, ents):
        rows.append(
            {
                "lambda": r.lam,
                "u_max": r.u_max,
                "scale2": r.scale2,
                "inv_umax": 1.0 / r.u_max,
                "masses": [p.mass for p in r.peaks],
                "residual_mass": r.residual_mass,
                "pohozaev": r.pohozaev,
                "alpha_shares": r.alpha_shares,
            }
        )
    if not grows:
        return QuantizationReport("no blow-up", rows, [], math.nan, False, False, variable, 0)
    tail = rows[-n_tail:]
    npk = len(tail[-1]["masses"])
    tail = [row for row in tail if len(row["masses"]) == npk]
    x = np.array([row[variable] for row in tail])
    masses = []
    for i in range(npk):
        y = np.array([row["masses"][i] for row in tail])
        masses.append(float(np.polyfit(x, y, 1)[1]) if len(x) >= 2 else float(y[-1]))
    res = np.array([row["residual_mass"] for row in tail])
    res_ex = float(np.polyfit(x, res, 1)[1]) if len(x) >= 2 else float(res[-1])
    decreasing = bool(len(res) >= 2 and res[-1] < res[0])
    share_end = tail[-1]["alpha_shares"][0] if tail[-1]["alpha_shares"] else {}
    share_ex = {}
    for key in share_end:
        ys = np.array([row["alpha_shares"][0].get(key, 0.0) for row in tail])
        share_ex[key] = float(np.polyfit(x, ys, 1)[1]) if len(x) >= 2 else float(ys[-1])
    ok = bool(masses) and all(abs(m / EIGHT_PI - 1) <= tolerance for m in masses)
    ok = ok and decreasing and abs(res_ex) <= tolerance * EIGHT_PI
    return QuantizationReport(
        verdict="blow-up",
        entries=rows,
        extrapolated_masses=masses,
        extrapolated_residual=res_ex,
        residual_decreasing=decreasing,
        passed=ok,
        variable=variable,
        tail=len(tail),
        alpha_share_end=share_end,
        extrapolated_alpha_share=share_ex,
    )


# -- concentration clusters ---------------------------------------------------


@dataclass(frozen=True)
class ClusterResult:
    ell: int
    points: list[tuple[float, float]]
    betas: list[float]
    success: bool
    uncovered: float


def concentration_clusters(
    u: Union[Field, Profile], measure: IntensityMeasure, k: int, eps: float, r: float
) -> ClusterResult:
    """Greedy covering of the normalized density by at most ``k`` balls of radius ``r``."""
    if k < 1 or not 0 < eps < 1 or not r > 0:
        raise ValueError("need k >= 1, eps in (0, 1) and r > 0")
    if isinstance(u, Field):
        return _clusters_grid(u, measure, k, eps, r)
    return _clusters_profile(u, measure, k, eps, r)


def _clusters_grid(u: Field, measure, k, eps, r) -> ClusterResult:
    dom = u.domain
    top = max(measure.sup_support(), 0.0)
    shift = max(0.0, top * float(u.values.max()))
    s0 = measure.exp_sums(u.values, shift, mmax=0)[0]
    D = dom.h**2 * s0.sum() + dom.strip_area * math.exp(-shift)
    mass = dom.to_grid(dom.h**2 * s0 / D)
    rad = int(math.floor(r / dom.h))
    ii, jj = np.mgrid[-rad : rad + 1, -rad : rad + 1]
    kern = ((ii * dom.h) ** 2 + (jj * dom.h) ** 2 < r * r).astype(float)
    pts, betas = [], []
    left = mass.copy()
    for _ in range(k):
        conv = signal.fftconvolve(left, kern, mode="same")
        conv[~dom.inside] = -np.inf
        i, j = np.unravel_index(int(np.argmax(conv)), conv.shape)
        b = float(conv[i, j])
        if b <= 0:
            break
        pts.append((float(dom.xs[j]), float(dom.ys[i])))
        betas.append(b)
        sel = (dom.X - dom.xs[j]) ** 2 + (dom.Y - dom.ys[i]) ** 2 < r * r
        left[sel] = 0.0
        if 1.0 - sum(betas) < eps:
            break
    unc = 1.0 - sum(betas)
    return ClusterResult(len(pts), pts, betas, unc < eps, unc)


def _clusters_profile(u: Profile, measure, k, eps, r) -> ClusterResult:
    pts_q, w, v, _ = u._cache
    top = max(measure.sup_support(), 0.0)
    shift = max(0.0, top * float(v.max()))
    ex = measure.exp_sums(v, shift, mmax=0)[0] - math.exp(-shift)
    flat = math.exp(-shift)
    D = u.area * flat + float(w @ ex)
    centers = getattr(u, "centers", None)
    if centers is None:
        centers = np.atleast_2d(getattr(u, "center"))
    cands = [tuple(c) for c in np.unique(np.round(centers, 14), axis=0)]
    taken = np.zeros(len(w), dtype=bool)
    pts, betas = [], []
    for _ in range(k):
        best = None
        for c in cands:
            if c in pts:
                continue
            inb = (np.hypot(pts_q[:, 0] - c[0], pts_q[:, 1] - c[1]) < r) & ~taken
            m = (math.pi * r * r * flat + float(w[inb] @ ex[inb])) / D
            if best is None or m > best[0]:
                best = (m, c, inb)
        if best is None:
            break
        pts.append((float(best[1][0]), float(best[1][1])))
        betas.append(best[0])
        taken |= best[2]
        if 1.0 - sum(betas) < eps:
            break
    unc = 1.0 - sum(betas)
    return ClusterResult(len(pts), pts, betas, unc < eps, unc)
