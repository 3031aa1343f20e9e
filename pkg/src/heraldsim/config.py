"""Experiment configuration (YAML) with strict validation.

Every rate and frequency is in units of the loss rate gamma, and every time in
units of 1/gamma.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .diffusion import DiffusionSpec
from .dynamics import IntegratorConfig
from .filters import FilterSpec
from .optimize import ConstraintSpec
from .schemes import AtomParams, RamanSpec, ResonantSpec, SpontaneousSpec

Kind = Literal["spontaneous", "raman", "resonant"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AtomConfig(_Strict):
    Gamma: float = Field(10.0, ge=0)
    gamma: float = Field(1.0, ge=0)
    gamma_dp: float = Field(0.0, ge=0)
    gamma_sd: float = Field(0.0, ge=0)
    delta: float = 0.0

    def params(self, **changes) -> AtomParams:
        values = self.model_dump()
        values.update(changes)
        return AtomParams(**values)


class SchemeConfig(_Strict):
    alpha: float = Field(0.1, ge=0, lt=1)
    omega: float = Field(60.0, ge=0)
    Delta: float = 600.0
    beta: float = Field(0.1, ge=0)
    envelope: Literal["rect", "gaussian"] = "rect"
    duration: Optional[float] = Field(None, gt=0)

    @field_validator("Delta")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("Delta must be nonzero")
        return v

    def spec(self, kind: str):
        if kind == "spontaneous":
            return SpontaneousSpec(self.alpha)
        if kind == "raman":
            return RamanSpec(self.omega, self.Delta, self.envelope, self.duration)
        return ResonantSpec(self.beta, self.envelope, self.duration)


class FilterConfig(_Strict):
    kappa: Optional[float] = Field(None, gt=0)
    n_max: int = Field(2, ge=1)

    def spec(self) -> Optional[FilterSpec]:
        return None if self.kappa is None else FilterSpec(self.kappa, self.n_max)


class DiffusionConfig(_Strict):
    nodes_per_axis: int = Field(21, ge=1)
    convention: Literal["paper", "fwhm"] = "paper"

    @field_validator("nodes_per_axis")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0:
            raise ValueError("nodes_per_axis must be odd")
        return v

    def spec(self) -> DiffusionSpec:
        return DiffusionSpec(self.nodes_per_axis, self.convention)


class ConstraintConfig(_Strict):
    target_eta: float = Field(0.01, gt=0, lt=1)
    eta_rel_tol: float = Field(1e-3, gt=0)
    points_per_decade: int = Field(24, ge=1)
    T_span: tuple[float, float] = (1e-2, 10.0)
    T_grid: Optional[list[float]] = None
    param_bounds: dict[Kind, tuple[float, float]] = Field(default_factory=dict)

    def spec(self) -> ConstraintSpec:
        return ConstraintSpec(
            target_eta=self.target_eta,
            eta_rel_tol=self.eta_rel_tol,
            param_bounds=dict(self.param_bounds),
            T_grid=None if self.T_grid is None else tuple(self.T_grid),
            T_span=tuple(self.T_span),
            points_per_decade=self.points_per_decade,
        )


class IntegratorSettings(_Strict):
    rel_tol: float = Field(1e-8, gt=0)
    abs_tol: float = Field(1e-10, gt=0)
    max_step: float = Field(float("inf"), gt=0)

    def spec(self) -> IntegratorConfig:
        return IntegratorConfig(self.rel_tol, self.abs_tol, self.max_step)


class ScanConfig(_Strict):
    """Grids for the sweeps. ``noise`` lists ``[gamma_dp, gamma_sd]`` pairs."""

    T: float = Field(1.0, gt=0)
    T_min: float = Field(0.01, gt=0)
    T_max: float = Field(10.0, gt=0)
    T_points: int = Field(31, ge=1)
    kappa: list[float] = Field(default_factory=lambda: [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0])
    noise: Optional[list[tuple[float, float]]] = None
    gamma_dp: list[float] = Field(default_factory=lambda: [0.0, 1.0, 5.0])
    gamma_sd: list[float] = Field(default_factory=lambda: [0.0, 1.0, 5.0])
    C: list[float] = Field(default_factory=lambda: [10.0, 30.0, 100.0, 300.0, 1000.0])

    @model_validator(mode="after")
    def _ordered(self):
        if self.T_max < self.T_min:
            raise ValueError("T_max must not be below T_min")
        if any(k <= 0 for k in self.kappa) or any(c <= 0 for c in self.C):
            raise ValueError("kappa and C grids must be positive")
        if any(v < 0 for v in self.gamma_dp + self.gamma_sd):
            raise ValueError("noise grids must be non-negative")
        return self


class OutputConfig(_Strict):
    dir: str = "results"
    plot: bool = True


class ExperimentConfig(_Strict):
    schemes: list[Kind] = Field(default_factory=lambda: ["spontaneous", "raman", "resonant"])
    atom: AtomConfig = AtomConfig()
    scheme: SchemeConfig = SchemeConfig()
    filter: FilterConfig = FilterConfig()
    diffusion: DiffusionConfig = DiffusionConfig()
    constraint: ConstraintConfig = ConstraintConfig()
    integrator: IntegratorSettings = IntegratorSettings()
    scan: ScanConfig = ScanConfig()
    output: OutputConfig = OutputConfig()
    jobs: int = Field(1, ge=1)
    seed: int = 0

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read and validate a YAML file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError("configuration root must be a mapping")
    return ExperimentConfig.model_validate(data)
