"""Run configuration: one JSON document with domain, measure, solver, sweep and analysis sections."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .domain import DOMAIN_KINDS, DiscreteDomain, EmbeddedCurve
from .measure import IntensityMeasure
from .solver import SolveConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    kind: str = "disk"
    parameters: dict[str, Any] = Field(default_factory=dict)
    h: float = 1.0 / 64
    eps0: Optional[float] = None

    @field_validator("kind")
    @classmethod
    def _kind(cls, v: str) -> str:
        if v not in DOMAIN_KINDS:
            raise ValueError(f"must be one of {', '.join(DOMAIN_KINDS)}")
        return v

    @field_validator("h")
    @classmethod
    def _h(cls, v: float) -> float:
        if not 0 < v <= 0.25:
            raise ValueError("must lie in (0, 0.25]")
        return v

    def build(self) -> DiscreteDomain:
        return DiscreteDomain(self.kind, dict(self.parameters), self.h)

    def curve(self, domain: DiscreteDomain) -> EmbeddedCurve:
        return EmbeddedCurve.default(domain, self.eps0)


class MeasureConfig(_Strict):
    kind: Literal["dirac", "uniform", "general"] = "dirac"
    alpha: float = 1.0
    a: float = 0.0
    b: float = 1.0
    atoms: list[tuple[float, float]] = Field(default_factory=list)
    breakpoints: list[float] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list)
    quadrature_nodes: int = 33

    def build(self) -> IntensityMeasure:
        if self.kind == "dirac":
            return IntensityMeasure.dirac(self.alpha)
        if self.kind == "uniform":
            return IntensityMeasure.uniform(self.a, self.b, self.quadrature_nodes)
        return IntensityMeasure.from_parts(self.atoms, self.breakpoints, self.values, self.quadrature_nodes)


class SolverConfig(_Strict):
    tol: float = 1e-10
    max_iter: int = 50
    min_damping: float = 2.0**-20
    dlam: float = 0.5
    dlam_max: float = 2.0
    dlam_min: float = 1e-4
    shrink: float = 0.5
    grow: float = 1.5
    max_jump: float = 1.0
    min_resolved_scale: float = 2.0
    linear_solver: Literal["sherman_morrison", "gmres"] = "sherman_morrison"

    def build(self) -> SolveConfig:
        return SolveConfig(**self.model_dump())


class SweepConfig(_Strict):
    # lambda values are given in units of pi
    lam: float = 4.0
    lam_range: tuple[float, float] = (0.0, 8.0)
    u_max_end: Optional[float] = 40.0
    lams: list[float] = Field(default_factory=lambda: [7.5, 8.5])
    r_values: Optional[list[float]] = None
    eps_values: list[float] = Field(default_factory=lambda: [2.0**-m for m in range(4, 21, 2)])
    thetas: list[float] = Field(default_factory=lambda: [0.0])
    weights: Optional[list[float]] = None
    alpha_tilde: float = 0.95
    n_fields: int = 1000
    k: int = 1
    n_radial: int = 12
    n_angular: int = 16
    boundary: float = 0.999
    green_points: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0), (0.5, 0.0)])

    @model_validator(mode="after")
    def _ranges(self) -> SweepConfig:
        if not self.lam_range[0] < self.lam_range[1]:
            raise ValueError("lam_range must be increasing")
        if self.k < 1:
            raise ValueError("k must be positive")
        return self


class AnalysisConfig(_Strict):
    rho: Optional[float] = None
    threshold: float = 0.1
    regime: Literal["auto", "nondeg", "deg"] = "auto"
    branch: Optional[str] = None
    n_tail: int = 6
    variable: Literal["scale2", "inv_umax"] = "scale2"
    tolerance: float = 0.05
    mt_margin: float = 0.05
    energy_tol: float = 0.03
    log_tol: float = 0.05
    j_tol: float = 0.10
    min_margin: float = 50.0
    max_moment_error: float = 0.1
    n_values: int = 5


class RunConfig(_Strict):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    measure: MeasureConfig = Field(default_factory=MeasureConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    seed: int = 0

    @property
    def lam(self) -> float:
        return self.sweep.lam * math.pi


def format_errors(exc: ValidationError) -> list[str]:
    """One ``path: message`` line per validation error."""
    return [".".join(str(p) for p in e["loc"]) + ": " + e["msg"] for e in exc.errors()]


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read a JSON config and apply dotted-path overrides such as ``{"domain.h": 0.01}``."""
    data: dict[str, Any] = json.loads(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return RunConfig.model_validate(data)
