"""Gridded planar domains, the Dirichlet Laplacian, and Green's functions.

Nodes sit on a uniform Cartesian lattice. A node is interior when it lies
strictly inside Omega. The five-point operator uses a symmetric cut-cell
closure: when the arm from an interior node to its neighbour crosses the
boundary at fraction ``theta`` of a cell, the arm contributes ``u_i/theta`` to
the diagonal (Dirichlet data extrapolated linearly to the ghost node). The
matrix stays symmetric and an M-matrix, and the scheme is second order.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from . import kernels

DOMAIN_KINDS = ("rectangle", "disk", "annulus", "rectangle_with_hole")
THETA_FLOOR = 1e-6
# lattice Green's function constant: G_h(y) = -(1/2pi) log(r/h) - C + ... for r >> h
LATTICE_CONST = (2.0 * np.euler_gamma + math.log(8.0)) / (4.0 * math.pi)


class DomainError(ValueError):
    pass


class SolveError(RuntimeError):
    """Iterative solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# ----------------------------------------------------------------------------
# geometric primitives: each knows its signed level set, exit distance along an
# axis ray and distance to its boundary curve


@dataclass(frozen=True)
class _Box:
    x0: float
    x1: float
    y0: float
    y1: float

    def inside(self, x, y):
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)

    def exit(self, x, y, d):
        return {0: self.x1 - x, 1: x - self.x0, 2: self.y1 - y, 3: y - self.y0}[d]

    def dist(self, x, y):
        return np.minimum(np.minimum(x - self.x0, self.x1 - x), np.minimum(y - self.y0, self.y1 - y))


@dataclass(frozen=True)
class _Disk:
    cx: float
    cy: float
    r: float
    hole: bool = False

    def inside(self, x, y):
        q = (x - self.cx) ** 2 + (y - self.cy) ** 2
        return q > self.r**2 if self.hole else q < self.r**2

    def exit(self, x, y, d):
        ex, ey = _DIRS[d]
        px, py = x - self.cx, y - self.cy
        b = px * ex + py * ey
        c = px * px + py * py - self.r**2
        disc = b * b - c
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
        if not self.hole:
            return -b + sq
        s = -b - sq
        return np.where((disc >= 0) & (s > 0), s, np.inf)

    def dist(self, x, y):
        q = np.hypot(x - self.cx, y - self.cy)
        return q - self.r if self.hole else self.r - q


_DIRS = {0: (1.0, 0.0), 1: (-1.0, 0.0), 2: (0.0, 1.0), 3: (0.0, -1.0)}


def _parse_point(v, default=(0.0, 0.0)) -> tuple[float, float]:
    if v is None:
        return default
    v = list(v)
    if len(v) != 2:
        raise DomainError("points must have two coordinates")
    return float(v[0]), float(v[1])


class DiscreteDomain:
    """A bounded planar domain sampled on a uniform node lattice.

    Parameters
    ----------
    kind
        One of ``rectangle``, ``disk``, ``annulus``, ``rectangle_with_hole``.
    parameters
        Geometry keyed by name (``x0, x1, y0, y1``, ``center``, ``radius``,
        ``r_inner``, ``r_outer``, ``hole_center``, ``hole_radius``).
    h
        Grid spacing.
    """

    def __init__(self, kind: str, parameters: dict | None = None, h: float = 1.0 / 64):
        if kind not in DOMAIN_KINDS:
            raise DomainError(f"unknown domain kind {kind!r}")
        if not (h > 0 and math.isfinite(h)):
            raise DomainError("h must be positive")
        p = dict(parameters or {})
        self.kind = kind
        self.h = float(h)
        self.holes: list[tuple[tuple[float, float], float]] = []
        prims: list = []
        if kind in ("rectangle", "rectangle_with_hole"):
            x0, x1 = float(p.get("x0", 0.0)), float(p.get("x1", 1.0))
            y0, y1 = float(p.get("y0", 0.0)), float(p.get("y1", 1.0))
            if not (x1 > x0 and y1 > y0):
                raise DomainError("rectangle needs x1 > x0 and y1 > y0")
            prims.append(_Box(x0, x1, y0, y1))
            self.params = {"x0": x0, "x1": x1, "y0": y0, "y1": y1}
            area = (x1 - x0) * (y1 - y0)
            bbox = (x0, x1, y0, y1)
            if kind == "rectangle_with_hole":
                c = _parse_point(p.get("hole_center"), (0.5 * (x0 + x1), 0.5 * (y0 + y1)))
                r = float(p.get("hole_radius", 0.25 * min(x1 - x0, y1 - y0)))
                if not (r > 0 and x0 < c[0] - r and c[0] + r < x1 and y0 < c[1] - r and c[1] + r < y1):
                    raise DomainError("hole must be a disk strictly inside the rectangle")
                prims.append(_Disk(c[0], c[1], r, hole=True))
                self.holes.append((c, r))
                self.params.update(hole_center=list(c), hole_radius=r)
                area -= math.pi * r * r
        else:
            c = _parse_point(p.get("center"))
            if kind == "disk":
                R = float(p.get("radius", 1.0))
                if R <= 0:
                    raise DomainError("radius must be positive")
                prims.append(_Disk(c[0], c[1], R))
                self.params = {"center": list(c), "radius": R}
                area = math.pi * R * R
            else:
                r0, R = float(p.get("r_inner", 0.5)), float(p.get("r_outer", 1.0))
                if not (0 < r0 < R):
                    raise DomainError("annulus needs 0 < r_inner < r_outer")
                prims += [_Disk(c[0], c[1], R), _Disk(c[0], c[1], r0, hole=True)]
                self.holes.append((c, r0))
                self.params = {"center": list(c), "r_inner": r0, "r_outer": R}
                area = math.pi * (R * R - r0 * r0)
            R = prims[0].r
            n = math.ceil(R / self.h - 1e-9)
            bbox = (c[0] - n * self.h, c[0] + n * self.h, c[1] - n * self.h, c[1] + n * self.h)
        self._prims = prims
        self.area = float(area)
        nx = (bbox[1] - bbox[0]) / self.h
        ny = (bbox[3] - bbox[2]) / self.h
        if abs(nx - round(nx)) > 1e-6 or abs(ny - round(ny)) > 1e-6:
            raise DomainError("rectangle sides must be integer multiples of h")
        self.bbox = bbox
        self.shape = (int(round(ny)) + 1, int(round(nx)) + 1)
        self._build()
        self._lock = threading.Lock()
        self._lu = None

    # -- construction --------------------------------------------------------
    def _build(self) -> None:
        ny, nx = self.shape
        h = self.h
        xs = self.bbox[0] + h * np.arange(nx)
        ys = self.bbox[2] + h * np.arange(ny)
        X, Y = np.meshgrid(xs, ys)
        self.xs, self.ys = xs, ys
        self.X, self.Y = X, Y
        inside = np.ones(self.shape, dtype=bool)
        for pr in self._prims:
            inside &= pr.inside(X, Y)
        inside[0, :] = inside[-1, :] = inside[:, 0] = inside[:, -1] = False
        self.inside = inside
        idx = -np.ones(self.shape, dtype=np.int64)
        idx[inside] = np.arange(int(inside.sum()))
        self.index = idx
        self.n = int(inside.sum())
        ih2 = 1.0 / (h * h)
        diag = np.zeros(self.shape)
        coef = {}
        cut_inv = {0: np.zeros(self.shape), 1: np.zeros(self.shape), 2: np.zeros(self.shape), 3: np.zeros(self.shape)}
        shifts = {0: (0, 1), 1: (0, -1), 2: (1, 0), 3: (-1, 0)}
        self.theta: dict[int, NDArray] = {}
        for d, (di, dj) in shifts.items():
            nb = np.zeros(self.shape, dtype=bool)
            nb_src = np.roll(np.roll(inside, -di, axis=0), -dj, axis=1)
            nb[:] = nb_src
            nb &= inside
            cut = inside & ~nb
            theta = np.ones(self.shape)
            px, py = X[cut], Y[cut]
            s = np.full(px.shape, np.inf)
            for pr in self._prims:
                s = np.minimum(s, pr.exit(px, py, d))
            th = np.clip(s / h, THETA_FLOOR, 1.0)
            theta[cut] = th
            self.theta[d] = theta
            cut_inv[d][cut] = 1.0 / th
            coef[d] = np.where(nb, ih2, 0.0)
            diag += np.where(nb, ih2, 0.0) + cut_inv[d] * ih2
        self._diag = np.where(inside, diag, 0.0)
        self._ce, self._cw, self._cn, self._cs = coef[0], coef[1], coef[2], coef[3]
        self._cut_inv_x = cut_inv[0] + cut_inv[1]
        self._cut_inv_y = cut_inv[2] + cut_inv[3]
        # sparse matrix over interior unknowns
        rows, cols, vals = [idx[inside]], [idx[inside]], [self._diag[inside]]
        for d, (di, dj) in shifts.items():
            nbmask = coef[d] > 0
            src = idx[nbmask]
            ii, jj = np.nonzero(nbmask)
            dst = idx[ii + di, jj + dj]
            rows.append(src)
            cols.append(dst)
            vals.append(-coef[d][nbmask])
        self.matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        )
        ext = ~inside
        grown = ndimage.binary_dilation(inside, structure=ndimage.generate_binary_structure(2, 1))
        self.boundary = ext & grown
        self.points = np.column_stack([X[inside], Y[inside]])

    # -- basic geometry ------------------------------------------------------
    @property
    def lattice_area(self) -> float:
        return self.n * self.h * self.h

    @property
    def strip_area(self) -> float:
        """Exact area minus the lattice area; the integration weight of boundary data."""
        return self.area - self.lattice_area

    @property
    def simply_connected(self) -> bool:
        return not self.holes

    def contains(self, points: ArrayLike) -> NDArray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ok = np.ones(len(p), dtype=bool)
        for pr in self._prims:
            ok &= pr.inside(p[:, 0], p[:, 1])
        return ok

    def distance_to_boundary(self, points: ArrayLike) -> NDArray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = np.full(len(p), np.inf)
        for pr in self._prims:
            d = np.minimum(d, pr.dist(p[:, 0], p[:, 1]))
        return d

    def boundary_components(self) -> int:
        _, n = ndimage.label(self.boundary, structure=np.ones((3, 3)))
        return int(n)

    def nearest_node(self, point: ArrayLike) -> tuple[int, int]:
        x, y = _parse_point(point)
        j = int(round((x - self.bbox[0]) / self.h))
        i = int(round((y - self.bbox[2]) / self.h))
        return i, j

    def spec(self) -> dict:
        return {"kind": self.kind, "parameters": self.params, "h": self.h}

    # -- integration ---------------------------------------------------------
    def integrate(self, values: ArrayLike, boundary_value: float = 0.0) -> float:
        """``int_Omega f`` from interior values plus the boundary-strip correction."""
        v = np.asarray(values, dtype=np.float64)
        return float(self.h * self.h * v.sum() + self.strip_area * boundary_value)

    # -- operators -----------------------------------------------------------
    def apply(self, values: NDArray) -> NDArray:
        """Matrix-free ``-Lap_h`` on interior values."""
        g = self.to_grid(values)
        out = kernels.stencil_apply(g, self._diag, self._cw, self._ce, self._cs, self._cn, self.inside)
        return out[self.inside]

    def edge_energy(self, values: NDArray) -> float:
        return float(kernels.edge_energy(self.to_grid(values), self.inside, self._cut_inv_x, self._cut_inv_y))

    def to_grid(self, values: ArrayLike) -> NDArray:
        g = np.zeros(self.shape)
        g[self.inside] = values
        return g

    def factorized(self):
        """Cached sparse LU of ``-Lap_h`` (read-only after creation)."""
        with self._lock:
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc())
            return self._lu

    def __getstate__(self) -> dict:
        state = self.__dict__.copy()
        state["_lock"] = None
        state["_lu"] = None
        return state

    def __setstate__(self, state: dict) -> None:
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"DiscreteDomain({self.kind!r}, {self.params!r}, h={self.h!r})"


@dataclass(frozen=True)
class Field:
    """Scalar grid function on the interior nodes; zero on the boundary."""

    domain: DiscreteDomain
    values: NDArray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.domain.n,):
            raise DomainError(f"field has shape {v.shape}, domain expects ({self.domain.n},)")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, domain: DiscreteDomain) -> Field:
        return cls(domain, np.zeros(domain.n))

    @classmethod
    def from_function(cls, domain: DiscreteDomain, fn: Callable[[NDArray, NDArray], NDArray]) -> Field:
        return cls(domain, np.asarray(fn(domain.points[:, 0], domain.points[:, 1]), dtype=np.float64))

    def grid(self) -> NDArray:
        return self.domain.to_grid(self.values)

    def max(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def argmax_point(self) -> NDArray:
        return self.domain.points[int(np.argmax(self.values))]

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def integral(self, boundary_value: float = 0.0) -> float:
        return self.domain.integrate(self.values, boundary_value)

    def interpolate(self, points: ArrayLike, order: int = 1) -> NDArray:
        """Spline interpolation of the zero-extended grid array at ``points``."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d = self.domain
        coords = np.vstack([(p[:, 1] - d.bbox[2]) / d.h, (p[:, 0] - d.bbox[0]) / d.h])
        return ndimage.map_coordinates(self.grid(), coords, order=order, mode="constant", cval=0.0)

    def __add__(self, other: Field) -> Field:
        return Field(self.domain, self.values + other.values)

    def __sub__(self, other: Field) -> Field:
        return Field(self.domain, self.values - other.values)

    def __mul__(self, c: float) -> Field:
        return Field(self.domain, self.values * c)

    __rmul__ = __mul__


def _check_field(field: Field, domain: DiscreteDomain | None = None) -> None:
    if domain is not None and field.domain is not domain:
        raise DomainError("field belongs to a different domain")


def laplacian_apply(field: Field) -> Field:
    """``-Lap_h u`` with homogeneous Dirichlet closure."""
    return Field(field.domain, field.domain.apply(field.values))


def poisson_solve(
    rhs: Field, method: str = "direct", tol: float = 1e-10, maxiter: int = 10000
) -> Field:
    """Solve ``-Lap_h u = rhs`` with zero boundary data.

    ``method="cg"`` runs preconditioned conjugate gradients and raises
    :class:`SolveError` carrying the achieved residual when it stalls.
    """
    dom = rhs.domain
    b = rhs.values
    if not np.all(np.isfinite(b)):
        raise DomainError("rhs must be finite")
    if method == "direct":
        return Field(dom, dom.factorized().solve(b))
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    dinv = 1.0 / dom.matrix.diagonal()
    prec = spla.LinearOperator(dom.matrix.shape, matvec=lambda x: dinv * x)
    bn = float(np.abs(b).max()) or 1.0
    x, info = spla.cg(dom.matrix, b, rtol=0.0, atol=tol * bn * 1e-3, maxiter=maxiter, M=prec)
    res = float(np.abs(dom.matrix @ x - b).max())
    if info != 0 and res > tol:
        raise SolveError("conjugate gradients did not converge", res)
    return Field(dom, x)


def green_function(domain: DiscreteDomain, y: ArrayLike) -> Field:
    """Discrete ``G(., y)``: unit point mass ``1/h^2`` at the node of ``y``."""
    i, j = domain.nearest_node(y)
    ny, nx = domain.shape
    if not (2 <= i < ny - 2 and 2 <= j < nx - 2) or not domain.inside[i - 2 : i + 3, j - 2 : j + 3].all():
        raise DomainError("y must be interior and at least 2h from the boundary")
    rhs = np.zeros(domain.n)
    rhs[domain.index[i, j]] = 1.0 / domain.h**2
    return poisson_solve(Field(domain, rhs))


def regular_part(domain: DiscreteDomain, x: ArrayLike, y: ArrayLike, green: Field | None = None) -> float:
    """``H(x, y) = G(x, y) + log|x - y| / 2pi``.

    The source is snapped to its node ``y_h``. For ``|x - y_h| < 2h`` the
    diagonal value is taken from the lattice expansion
    ``G_h(y_h) + log(h)/2pi - (2 gamma + log 8)/4pi``, which removes the
    logarithmic singularity exactly at the discrete level.
    """
    xp = np.asarray(_parse_point(x))
    i, j = domain.nearest_node(y)
    ys = np.array([domain.xs[j], domain.ys[i]])
    if domain.distance_to_boundary(xp[None])[0] < 2 * domain.h:
        raise DomainError("x is too close to the boundary")
    G = green if green is not None else green_function(domain, ys)
    r = float(np.hypot(*(xp - ys)))
    if r < 2 * domain.h:
        gy = float(G.values[domain.index[i, j]])
        return gy + math.log(domain.h) / (2 * math.pi) - LATTICE_CONST
    gx = float(G.interpolate(xp[None], order=3)[0])
    return gx + math.log(r) / (2 * math.pi)


# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddedCurve:
    """A circle ``Gamma`` inside Omega with the embedding ``chi``.

    ``chi(x) = (x - center)/radius`` as a complex number, so ``chi`` maps
    ``Gamma`` onto the unit circle and has Lipschitz constant ``1/radius``.
    """

    center: tuple[float, float]
    radius: float
    rho: float
    eps0: float
    d: float

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.radius

    def gamma(self, theta: ArrayLike) -> NDArray:
        th = np.asarray(theta, dtype=np.float64)
        return np.stack([self.center[0] + self.radius * np.cos(th), self.center[1] + self.radius * np.sin(th)], axis=-1)

    def chi(self, points: ArrayLike) -> NDArray:
        p = np.asarray(points, dtype=np.float64)
        return ((p[..., 0] - self.center[0]) + 1j * (p[..., 1] - self.center[1])) / self.radius

    @classmethod
    def default(cls, domain: DiscreteDomain, eps0: float | None = None) -> EmbeddedCurve:
        """Geometric-mean circle around the hole, ``rho = r_hole/(2 r_Gamma)``."""
        if not domain.holes:
            raise DomainError("the min-max curve needs a domain with a hole")
        (c, r0) = domain.holes[0]
        if domain.kind == "annulus":
            r1 = domain.params["r_outer"]
            far = r1
        else:
            p = domain.params
            r1 = min(c[0] - p["x0"], p["x1"] - c[0], c[1] - p["y0"], p["y1"] - c[1])
            far = max(math.hypot(cx - c[0], cy - c[1]) for cx in (p["x0"], p["x1"]) for cy in (p["y0"], p["y1"]))
        rg = math.sqrt(r0 * r1)
        e0 = 0.5 * min(rg - r0, r1 - rg) if eps0 is None else float(eps0)
        return cls(center=(float(c[0]), float(c[1])), radius=rg, rho=r0 / (2 * rg), eps0=e0, d=far / rg)

    def check(self, domain: DiscreteDomain, n_theta: int = 720) -> list[str]:
        """Return the list of violated invariants (empty when all hold)."""
        bad = []
        th = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
        pts = self.gamma(th)
        if np.abs(np.abs(self.chi(pts)) - 1.0).max() > 1e-10:
            bad.append("chi(gamma) leaves the unit circle")
        if np.abs(self.chi(domain.points)).min() < 2 * self.rho - 1e-12:
            bad.append("|chi| < 2 rho at an interior node")
        if domain.distance_to_boundary(pts).min() < self.eps0 - 1e-12:
            bad.append("tube of radius eps0 around Gamma leaves Omega")
        return bad


def chi_power_integral(domain: DiscreteDomain, curve: EmbeddedCurve, j: int, refine: int = 4) -> complex:
    """``int_Omega chi^j dx``; exactly zero for a circle concentric with an annulus."""
    if j == 0:
        return complex(domain.area)
    if domain.kind == "annulus" and np.allclose(curve.center, domain.params["center"]):
        return 0j
    h = domain.h / refine
    x0, x1, y0, y1 = domain.bbox
    xs = x0 + h * (np.arange(int(round((x1 - x0) / h))) + 0.5)
    ys = y0 + h * (np.arange(int(round((y1 - y0) / h))) + 0.5)
    tot = 0j
    for y in ys:
        pts = np.column_stack([xs, np.full_like(xs, y)])
        m = domain.contains(pts)
        tot += (curve.chi(pts[m]) ** j).sum()
    return complex(tot * h * h)


def make_domain(kind: str, parameters: dict | None = None, h: float = 1.0 / 64) -> DiscreteDomain:
    return DiscreteDomain(kind, parameters, h)


__all__: Sequence[str] = [
    "DiscreteDomain",
    "DomainError",
    "EmbeddedCurve",
    "Field",
    "SolveError",
    "chi_power_integral",
    "green_function",
    "laplacian_apply",
    "make_domain",
    "poisson_solve",
    "regular_part",
]
