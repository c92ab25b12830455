"""Independent reference solutions used by the tests.

The radial oracle integrates the mean field equation on the unit disk as an
ODE in r (scipy's ``solve_ivp``) and shoots on the peak value; it shares no
code with the package beyond the measure's atom and density data.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


def _moments(meas, w: float, m: int) -> float:
    """``int alpha^m e^{alpha w} P`` by adaptive quadrature on the raw data."""
    tot = sum(wt * a**m * math.exp(a * w) for a, wt in zip(meas.atom_locations, meas.atom_weights))
    bp, vals = list(meas.breakpoints), list(meas.values)
    for a, b, va, vb in zip(bp, bp[1:], vals, vals[1:]):
        f = lambda x: (va + (vb - va) * (x - a) / (b - a)) * x**m * math.exp(x * w)
        tot += integrate.quad(f, a, b, epsabs=0, epsrel=1e-13)[0]
    return tot


def _shoot(meas, a: float, c: float, r_eval=None):
    """Integrate ``w'' + w'/r = -c S1(w)``, ``w(0) = a``, tracking ``int S0 2 pi r dr``."""
    r0 = 1e-6
    s1 = _moments(meas, a, 1)
    y0 = [a - c * s1 * r0**2 / 4, -c * s1 * r0 / 2, math.pi * r0**2 * _moments(meas, a, 0)]

    def rhs(r, y):
        w, dw, _ = y
        return [dw, -dw / r - c * _moments(meas, w, 1), 2 * math.pi * r * _moments(meas, w, 0)]

    return integrate.solve_ivp(rhs, (r0, 1.0), y0, rtol=1e-11, atol=1e-13, dense_output=True, t_eval=r_eval)


def _c_for_peak(meas, a: float) -> float:
    """Coefficient ``c`` so that ``w(1) = 0`` for peak value ``a``."""
    def g(c):
        return _shoot(meas, a, c).y[0, -1]

    lo, hi = 1e-12, 1.0
    while g(hi) > 0:
        hi *= 2
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-14)


def lambda_of_peak(meas, a: float) -> float:
    c = _c_for_peak(meas, a)
    return c * _shoot(meas, a, c).y[2, -1]


def radial_solution(meas, lam: float, a_hi: float = 6.0):
    """``(u(r), u(0), log I, J)`` for the minimal radial branch on the unit disk.

    ``u`` is a callable on radii; ``J`` is the functional value from 1D
    quadrature of ``|u'|^2``.
    """
    a = optimize.brentq(lambda t: lambda_of_peak(meas, t) - lam, 1e-8, a_hi, xtol=1e-14, rtol=1e-13)
    c = _c_for_peak(meas, a)
    sol = _shoot(meas, a, c)
    I = sol.y[2, -1]

    def u(r):
        r = np.clip(np.asarray(r, dtype=float), 1e-6, 1.0)
        return sol.sol(r)[0]

    rr = np.linspace(1e-6, 1.0, 20001)
    dw = sol.sol(rr)[1]
    E = float(integrate.simpson(dw**2 * 2 * math.pi * rr, x=rr))
    return u, a, math.log(I), 0.5 * E - lam * math.log(I)


def liouville_disk(lam: float):
    """Closed form for ``P = delta_1``: ``u = 2 log((1+b)/(1+b r^2))``, ``lam = 8 pi b/(1+b)``."""
    b = lam / (8 * math.pi - lam)
    return lambda r: 2 * np.log((1 + b) / (1 + b * np.asarray(r) ** 2)), b


def uniform_alpha_n(t: float) -> float:
    """``alpha_n`` for the uniform density: ``(1/t) log((t e^t - e^t + 1)/t^2)``."""
    return math.log((t * math.exp(t) - math.exp(t) + 1) / t**2) / t


def k1_family_j(lam: float, area: float, eps0: float, z: float) -> float:
    """``J`` along the single-bubble min-max family for ``P = delta_1`` (|z| >= 2/3).

    ``E = 32 pi L``, ``int e^v = |Omega| + 2 pi eps0^2 (e^{2L} - 1)`` with
    ``L = log 1/(1 - |z|^2)``.
    """
    L = math.log(1 / (1 - z * z))
    return 16 * math.pi * L - lam * math.log(area + 2 * math.pi * eps0**2 * (math.exp(2 * L) - 1))


def bubble_mass_in_disk(delta: float, p, radius: float = 1.0, n: int = 4096) -> float:
    """``int_{|x| < radius} e^{U_{delta,p}}`` via ``int_0^R e^U r dr = 4R^2/(delta^2 + R^2)`` per ray."""
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=1)
    pe = e @ np.asarray(p, dtype=float)
    R = -pe + np.sqrt(pe**2 + radius**2 - float(np.dot(p, p)))
    return float(np.mean(4 * R**2 / (delta**2 + R**2)) * 2 * np.pi)


def bubble_mass_in_ball(delta: float, rho: float) -> float:
    """``int_{B_rho(xi)} e^{U_{delta,xi}} = 8 pi rho^2/(delta^2 + rho^2)``."""
    return 8 * math.pi * rho**2 / (delta**2 + rho**2)
