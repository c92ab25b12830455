"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the NumPy fallback.
The exp-bound kernels always run through NumPy.
Setting ``MEANFIELD_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MEANFIELD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

# NumPy's vectorized exp outruns scalar libm calls, so the exp-bound kernels
# use the NumPy versions under both backends (see benchmarks/bench_kernels.py)
atom_exp_sums = _kernels_py.atom_exp_sums
exp_shifted = _kernels_py.exp_shifted
stencil_apply = _impl.stencil_apply
edge_energy = _impl.edge_energy
barycenter_eval = _impl.barycenter_eval

__all__ = [
    "BACKEND",
    "atom_exp_sums",
    "exp_shifted",
    "stencil_apply",
    "edge_energy",
    "barycenter_eval",
]
