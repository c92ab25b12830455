"""Mean field equations with a variable vortex-intensity measure.

Submodules are imported on first attribute access so the command-line entry
point can set thread limits before numpy loads.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "IntensityMeasure": "measure",
    "DiscreteDomain": "domain",
    "EmbeddedCurve": "domain",
    "Field": "domain",
    "green_function": "domain",
    "regular_part": "domain",
    "SolveConfig": "solver",
    "newton_solve": "solver",
    "continue_lambda": "solver",
    "continue_amplitude": "solver",
    "j_lambda": "energy",
    "jlambda_asymptotics": "energy",
    "quantization_check": "blowup",
    "bubble_fit": "blowup",
    "brouwer_degree": "topology",
    "vandermonde_map": "topology",
    "vandermonde_solve": "topology",
    "minmax_upper_bound": "topology",
}


def __getattr__(name: str):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


__all__ = sorted(_EXPORTS)
