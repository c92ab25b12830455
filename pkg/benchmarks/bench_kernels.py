"""Time the compiled kernels against the NumPy fallback on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--h 0.0078125] [--repeat 5]

Each kernel is also timed inside one end-to-end Newton solve per backend,
run in a subprocess so the backend is chosen at import as in normal use.
"""

from __future__ import annotations

import argparse
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from meanfield import _kernels_py as fallback
from meanfield.domain import DiscreteDomain

try:
    from meanfield import _kernels as compiled
except ImportError:
    compiled = None


def _cases(h: float, rng: np.random.Generator) -> dict:
    d = DiscreteDomain("annulus", {}, h)
    g = np.where(d.inside, rng.standard_normal(d.inside.shape), 0.0)
    u = 10 * rng.standard_normal(d.n)
    alphas, weights = np.linspace(0.0, 1.0, 33), np.full(33, 1 / 33)
    pts = d.points
    centers = np.array([[0.7, 0.0], [-0.7, 0.05]])
    log_t = np.log([0.4, 0.6])
    return {
        "stencil_apply": (g, d._diag, d._cw, d._ce, d._cs, d._cn, d.inside),
        "edge_energy": (g, d.inside, d._cut_inv_x, d._cut_inv_y),
        "atom_exp_sums": (u, alphas, weights, 10.0),
        "exp_shifted": (u, 0.5),
        "barycenter_eval": (pts, centers, log_t, 0.95, 0.1, 1e-3, True),
    }


SOLVE = (
    "import math, time; from meanfield.domain import DiscreteDomain, Field;"
    "from meanfield.measure import IntensityMeasure as M; from meanfield.solver import newton_solve;"
    "d = DiscreteDomain('disk', {{}}, {h}); m = M.uniform();"
    "t = time.perf_counter(); newton_solve(Field.zeros(d), 4 * math.pi, m); print(time.perf_counter() - t)"
)


def _solve_time(h: float, pure: bool) -> float:
    env = dict(os.environ, MEANFIELD_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE.format(h=h)], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv: list[str] | None = None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--h", type=float, default=1 / 128)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; only the fallback is available")
        return
    cases = _cases(args.h, np.random.default_rng(0))
    print(f"grid spacing h = {args.h:g}, best of {args.repeat}")
    print(f"{'kernel':<18}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}")
    for name, call_args in cases.items():
        tc = min(timeit.repeat(lambda: getattr(compiled, name)(*call_args), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: getattr(fallback, name)(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<18}{1e3 * tc:>14.3f}{1e3 * tp:>14.3f}{tp / tc:>10.2f}")
    tc, tp = _solve_time(args.h, False), _solve_time(args.h, True)
    print(f"{'newton (uniform P)':<18}{1e3 * tc:>14.1f}{1e3 * tp:>14.1f}{tp / tc:>10.2f}")
    print(f"lambda = 4 pi on the unit disk, about {math.pi / args.h**2:.0f} nodes")


if __name__ == "__main__":
    main()
