"""Experiment configuration: strict schema over a TOML (or resolved JSON) file.

Layout: top-level ``kind``, ``master_seed``, ``threads``, ``tolerance_scale``
and ``out``, plus one table named after the kind holding the model and grid
parameters.  Unknown keys are rejected everywhere; every default appears in
the resolved record written next to the outputs.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("collapse", "density", "energy", "timeop", "spins", "fields", "audit")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _square(m, name):
    if m is None:
        return m
    if not m or any(len(row) != len(m) for row in m):
        raise ValueError(f"{name} must be a square matrix")
    return m


class TwoLevelish(Strict):
    """Amplitudes, collapse eigenvalues and an optional H_A matrix (collapse basis)."""

    alpha: list[float]
    alpha_im: Optional[list[float]] = None
    a: list[float]
    h_a: Optional[list[list[float]]] = None
    h_a_im: Optional[list[list[float]]] = None
    lam: float = Field(gt=0)

    @field_validator("h_a", "h_a_im")
    @classmethod
    def _sq(cls, v, info):
        return _square(v, info.field_name)

    @model_validator(mode="after")
    def _shapes(self):
        n = len(self.alpha)
        if len(self.a) != n:
            raise ValueError(f"a has {len(self.a)} entries, alpha has {n}")
        if self.alpha_im is not None and len(self.alpha_im) != n:
            raise ValueError("alpha_im length differs from alpha")
        norm = sum(abs(z) ** 2 for z in self.amplitudes())
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"amplitudes must be normalized (sum |alpha|^2 = {norm!r})")
        for m in (self.h_a, self.h_a_im):
            if m is not None and len(m) != n:
                raise ValueError(f"H_A must be {n}x{n}")
        return self

    def amplitudes(self) -> np.ndarray:
        im = np.zeros(len(self.alpha)) if self.alpha_im is None else np.asarray(self.alpha_im)
        amp = np.asarray(self.alpha, dtype=float) + 1j * im
        return amp / np.sqrt(np.sum(np.abs(amp) ** 2))

    def hamiltonian(self) -> np.ndarray:
        n = len(self.a)
        h = np.zeros((n, n), complex)
        if self.h_a is not None:
            h += np.asarray(self.h_a, float)
        if self.h_a_im is not None:
            h += 1j * np.asarray(self.h_a_im, float)
        return h


class CollapseParams(TwoLevelish):
    t: float = Field(gt=0)
    dt: float = Field(gt=0)
    n_traj: int = Field(ge=100)
    sampler: Literal["physical", "raw"] = "physical"
    bins: int = Field(default=60, ge=2)
    dump_trajectories: int = Field(default=0, ge=0)


class DensityParams(TwoLevelish):
    t: float = Field(gt=0)
    dt: float = Field(gt=0)
    dt_ode: float = Field(default=1e-3, gt=0)
    n_traj: int = Field(ge=100)
    sampler: Literal["physical", "raw"] = "physical"


class LatticeParams(Strict):
    sites: int = Field(ge=16)
    spacing: float = Field(gt=0)
    mass: float = Field(gt=0)
    sigma0: float = Field(gt=0)
    smearing: float = Field(gt=0)
    mass_ratio: float = Field(gt=0)
    lam: float = Field(gt=0)
    t: float = Field(gt=0)
    dt_ode: float = Field(default=0.004, gt=0)


class EnergyDiagParams(TwoLevelish):
    t: float = Field(ge=0)
    dt: float = Field(gt=0)
    e_max: float = Field(gt=0)
    n_e: int = Field(default=201, ge=3)
    beta_max: float = Field(default=4000.0, gt=0)
    n_beta: int = Field(default=400001, ge=101)
    dt_ode: float = Field(default=1e-3, gt=0)


class EnergyParams(Strict):
    """Either [energy.diag] (distributions, optional H_A conservation) or [energy.lattice] (heating)."""

    diag: Optional[EnergyDiagParams] = None
    lattice: Optional[LatticeParams] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.diag is None) == (self.lattice is None):
            raise ValueError("give exactly one of [energy.diag] or [energy.lattice]")
        return self


class TimeopParams(Strict):
    alpha: list[float]
    a: list[float]
    lam: float = Field(gt=0)
    t_values: list[float] = Field(min_length=1)
    s: float = Field(default=0.0, ge=0)
    A_scale: float = Field(default=1.0, gt=0)
    series_tol: float = Field(default=1e-12, gt=0)

    @field_validator("t_values")
    @classmethod
    def _pos(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("all t_values must be positive")
        return v


class SpinsParams(Strict):
    N: int = Field(ge=1)
    betaC: float
    n_samples: int = Field(ge=100)


class FieldsParams(Strict):
    M: float = Field(gt=0)
    lam: float = Field(gt=0)
    n_times: int = Field(ge=8)
    n_freqs: int = Field(ge=8)
    tau: float = Field(gt=0)
    levels: int = Field(default=3, ge=2)


class AuditParams(Strict):
    temperatures_ev: list[float] = Field(min_length=1)
    rho: float = Field(gt=0)
    constants_file: Optional[str] = None
    constants: dict[str, float] = Field(default_factory=dict)


class ExperimentConfig(Strict):
    kind: Literal["collapse", "density", "energy", "timeop", "spins", "fields", "audit"]
    master_seed: int = 0
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)  # never changes results
    tolerance_scale: float = Field(default=1.0, gt=0)
    out: str = "out"
    collapse: Optional[CollapseParams] = None
    density: Optional[DensityParams] = None
    energy: Optional[EnergyParams] = None
    timeop: Optional[TimeopParams] = None
    spins: Optional[SpinsParams] = None
    fields: Optional[FieldsParams] = None
    audit: Optional[AuditParams] = None

    @model_validator(mode="after")
    def _one_table(self):
        if getattr(self, self.kind) is None:
            raise ValueError(f"kind = {self.kind!r} needs a [{self.kind}] table")
        extra = [k for k in KINDS if k != self.kind and getattr(self, k) is not None]
        if extra:
            raise ValueError(f"tables {extra} do not belong to kind {self.kind!r}")
        return self

    @property
    def params(self):
        return getattr(self, self.kind)

    def resolved(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)


class ConfigError(Exception):
    """Unreadable or schema-invalid configuration (CLI exit code 2)."""


def _format_pydantic(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_pydantic(exc)) from None


def load_config(path: Union[str, Path], overrides: dict | None = None) -> ExperimentConfig:
    """Read TOML (or a resolved-config JSON) and apply top-level overrides."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return parse_config(data)
