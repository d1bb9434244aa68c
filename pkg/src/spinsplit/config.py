"""Run configuration: one YAML file describes one experiment.

Grammar (every section except ``model`` is optional; unknown keys are
rejected)::

    model:
      name: ising | toric | custom
      extents: [8]            # ising: lattice extents; toric: [L]
      epsilon: 0.0            # used by `spectrum` and `build`
      terms: ["1.0 * Z0 Z1"]  # custom only, Pauli-term text format
      n_spins: 2              # custom only
      max_support: 4
      perturbation:           # omit for a uniform single-site X field
        axis: X
        seed_support: [0]     # sites of P_0, must contain 0
        combine: product      # product | sum
    solver:   {k, tol, cluster_tol, seed, max_spins, method, krylov_dim}
    sweep:    {sizes: [[6], [8]], epsilons: [0.1], m: 2}
    fit:      {epsilon: 0.2, delta: 1.0e-6}
    trotter:  {beta: 1.0, epsilon: 0.3, steps: [16, 32], mode: exact_trace, probes: 64}
    order:    {epsilon: 0.2, axis: Z, states: 2, resolve_symmetry: true}
    peierls:  {max_region: 4, ground_config: 0}
    output:   {directory: out, formats: [csv, json, png]}
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .eigensolve import DEFAULT_SEED, SolverSettings
from .errors import ConfigError, SpinSplitError
from .lattice import build_torus
from .models import (
    HamiltonianSpec,
    build_custom,
    build_field_perturbation,
    build_ising,
    build_toric_code,
    uniform_field,
)
from .pauli import DEFAULT_MAX_SPINS


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PerturbationConfig(_Section):
    axis: Literal["X", "Y", "Z"] = "X"
    seed_support: Optional[list[int]] = None
    combine: Literal["product", "sum"] = "product"


class ModelConfig(_Section):
    name: Literal["ising", "toric", "custom"]
    extents: list[int] = Field(default_factory=lambda: [8])
    epsilon: float = Field(0.0, ge=0)
    terms: list[str] = Field(default_factory=list)
    n_spins: Optional[int] = None
    max_support: int = 4
    perturbation: Optional[PerturbationConfig] = None


class SolverConfig(_Section):
    k: int = Field(6, ge=1)
    tol: float = Field(1e-9, gt=0)
    cluster_tol: float = Field(1e-7, gt=0)
    seed: int = DEFAULT_SEED
    max_spins: int = DEFAULT_MAX_SPINS
    method: Literal["auto", "krylov", "dense"] = "auto"
    krylov_dim: int = Field(80, ge=4)

    def settings(self) -> SolverSettings:
        return SolverSettings(k=self.k, tol=self.tol, cluster_tol=self.cluster_tol,
                              seed=self.seed, max_spins=self.max_spins, method=self.method,
                              krylov_dim=self.krylov_dim)


class SweepConfig(_Section):
    sizes: list[list[int]] = Field(min_length=1)
    epsilons: list[float] = Field(min_length=1)
    m: Optional[int] = None

    @field_validator("epsilons")
    @classmethod
    def _nonneg(cls, v):
        if any(e < 0 for e in v):
            raise ValueError("epsilons must be >= 0")
        return v


class FitConfig(_Section):
    epsilon: Optional[float] = None
    delta: Optional[float] = Field(None, gt=0)


class TrotterConfig(_Section):
    beta: float = Field(1.0, ge=0)
    epsilon: float = Field(0.3, ge=0)
    steps: list[int] = Field(default_factory=lambda: [16, 32, 64, 128], min_length=1)
    mode: Literal["exact_trace", "stochastic_trace"] = "exact_trace"
    probes: int = Field(64, ge=1)


class OrderConfig(_Section):
    epsilon: float = Field(0.2, ge=0)
    axis: Literal["X", "Y", "Z"] = "Z"
    states: int = Field(2, ge=1)
    resolve_symmetry: bool = True


class PeierlsConfig(_Section):
    max_region: int = Field(4, ge=1)
    ground_config: int = 0


class OutputConfig(_Section):
    directory: str = "out"
    formats: list[Literal["csv", "json", "png"]] = Field(
        default_factory=lambda: ["csv", "json", "png"])


class RunConfig(_Section):
    model: ModelConfig
    solver: SolverConfig = Field(default_factory=SolverConfig)
    sweep: Optional[SweepConfig] = None
    fit: Optional[FitConfig] = None
    trotter: Optional[TrotterConfig] = None
    order: Optional[OrderConfig] = None
    peierls: Optional[PeierlsConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)

    def dump(self) -> str:
        """Resolved-config echo; loading it back reproduces the run."""
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return parse_config(data)


def build_model(cfg: ModelConfig, extents: list[int] | None = None) -> HamiltonianSpec:
    """Model with its perturbation attached, at ``cfg.epsilon``."""
    extents = list(extents if extents is not None else cfg.extents)
    try:
        if cfg.name == "ising":
            H = build_ising(build_torus(len(extents), extents))
        elif cfg.name == "toric":
            if len(extents) == 2 and extents[0] != extents[1]:
                raise ConfigError("toric code needs a square torus")
            H = build_toric_code(extents[0])
        else:
            if not cfg.terms or cfg.n_spins is None:
                raise ConfigError("custom model needs model.terms and model.n_spins")
            H = build_custom(cfg.terms, cfg.n_spins, cfg.max_support)
        pc = cfg.perturbation
        if pc is None or pc.seed_support is None:
            pert = uniform_field(H.lattice, pc.axis if pc else "X")
        else:
            pert = build_field_perturbation(H.lattice, pc.axis, pc.seed_support, pc.combine)
    except ConfigError:
        raise
    except SpinSplitError as exc:
        raise ConfigError(str(exc)) from None
    return H.with_perturbation(pert, cfg.epsilon)
