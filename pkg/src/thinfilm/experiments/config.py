"""Run configuration: a TOML file whose tables mirror ExperimentConfig."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import ConfigError
from ..flows import FlowSpec
from ..model import ModelParams
from ..solvers import PicardConfig, SmallDataConfig, StepperConfig
from ..spectral import Grid

EXPERIMENTS = ("simulate", "blowup", "suppress", "dissipation_sweep", "verify")
CHECKS = ("semigroup", "energy", "coupling_gap", "small_data")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Tolerances(_Strict):
    semigroup_rel: float = 1e-10
    slope_abs: float = 0.05
    energy_rel: float = 1e-6
    energy_halving_ratio: float = 2.0
    drift_slope: float = 0.05
    bound_slack: float = 0.01
    lower_curve_slack: float = 0.01
    fit_residual: float = 0.05
    beta_slack: float = 0.1
    small_data_constant: float = 10.0


class ExperimentSection(_Strict):
    kind: Literal["simulate", "blowup", "suppress", "dissipation_sweep", "verify"] = "simulate"
    id: str = ""
    checks: list[Literal["semigroup", "energy", "coupling_gap", "small_data"]] = list(CHECKS)
    datum: Literal["blowup", "cosine", "white_noise", "random_smooth"] = "blowup"
    amplitude: float = 1.0
    margin: float = Field(1.5, gt=1.0)
    kmax: int = Field(4, ge=1)
    ladder: list[float] = [0.0, 10.0, 50.0, 250.0]
    horizon_factor: float = Field(5.0, gt=0.0)
    decay_window: float = Field(1e-8, gt=0.0, lt=1.0)
    tolerances: Tolerances = Tolerances()

    @field_validator("ladder")
    @classmethod
    def _ladder(cls, v):
        if not v or any(a < 0 for a in v):
            raise ValueError("ladder needs non-negative amplitudes")
        return v


class GridSection(_Strict):
    n: int = Field(64, ge=8)
    wavenumber_scale: Literal["two_pi", "unit"] = "two_pi"

    @field_validator("n")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError("n must be even")
        return v

    def build(self) -> Grid:
        return Grid(self.n, self.wavenumber_scale)


class ModelSection(_Strict):
    p: float = 2.5
    rho: float = 0.0
    A_p: Union[float, Literal["estimate"]] = 1.0
    C_T1: float = 1.0
    mu: float = 1.0
    nonlinear: bool = True
    ap_samples: int = Field(200, ge=1)

    def build(self, A_p: float | None = None) -> ModelParams:
        ap = A_p if A_p is not None else (1.0 if self.A_p == "estimate" else self.A_p)
        try:
            return ModelParams(self.p, self.rho, ap, self.C_T1, self.mu, self.nonlinear)
        except ValueError as exc:
            raise ConfigError(f"[model] {exc}") from exc


class FlowSection(_Strict):
    family: Literal["zero", "alternating_shear", "user_table"] = "zero"
    base_amplitude: float = 100.0
    half_period: float = Field(2e-3, gt=0.0)
    phase_seed: Optional[int] = None
    A: float = Field(1.0, ge=0.0)
    table: list[tuple[int, float, float, float]] = []
    tau_tol: float = Field(1e-3, gt=0.0)
    s_samples: int = Field(8, ge=1)
    norm_tol: float = Field(1e-6, gt=0.0, le=0.1)

    def build(self, seed: int, A: float | None = None) -> FlowSpec:
        try:
            return FlowSpec(self.family, self.base_amplitude, self.half_period,
                            seed if self.phase_seed is None else self.phase_seed,
                            self.A if A is None else A, tuple(self.table))
        except ValueError as exc:
            raise ConfigError(f"[flow] {exc}") from exc


class PicardSection(_Strict):
    T: float = 1e-3
    nodes_per_panel: int = 8
    grading_exponent: float = 2.0
    tol: float = 1e-12
    max_sweeps: int = 40
    radius_R: Optional[float] = None
    C0: float = 1.0
    chebyshev_nodes: int = 16

    def build(self) -> PicardConfig:
        return PicardConfig(**self.model_dump())


class SolverSection(_Strict):
    scheme: Literal["ETDRK2", "ETDRK4"] = "ETDRK4"
    dt_init: float = 1e-6
    dt_min: float = 1e-12
    dt_max: float = 1e-3
    cfl_safety: float = 400.0
    cfl_advect: float = 1.0
    blowup_threshold: float = 1e6
    rho: Optional[float] = None
    adaptive: bool = True
    decay_floor: Optional[float] = None
    horizon: Optional[float] = None
    output_interval: Optional[float] = None
    record_every_step: bool = False
    delta_star: float = 1e-2
    varrho: float = 1e-3
    picard: PicardSection = PicardSection()

    def stepper(self, **overrides) -> StepperConfig:
        keys = ("scheme", "dt_init", "dt_min", "dt_max", "cfl_safety", "cfl_advect",
                "blowup_threshold", "rho", "adaptive", "decay_floor")
        kw = {k: getattr(self, k) for k in keys}
        kw.update(overrides)
        try:
            return StepperConfig(**kw)
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from exc

    def small_data(self) -> SmallDataConfig:
        return SmallDataConfig(self.delta_star, self.varrho)


class OutputSection(_Strict):
    dir: str = "runs"
    checkpoint_stride: int = Field(0, ge=0)
    plots: bool = True


class ExperimentConfig(_Strict):
    experiment: ExperimentSection = ExperimentSection()
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    flow: FlowSection = FlowSection()
    solver: SolverSection = SolverSection()
    output: OutputSection = OutputSection()
    seed: int = Field(0, ge=0, lt=2**64)

    config_hash: str = ""

    @model_validator(mode="before")
    @classmethod
    def _default_id(cls, data):
        if isinstance(data, dict) and isinstance(data.get("experiment", {}), dict):
            exp = dict(data.get("experiment", {}))
            if not exp.get("id"):
                exp["id"] = exp.get("kind", "simulate")
            data = {**data, "experiment": exp}
        return data

    @property
    def run_id(self) -> str:
        return self.experiment.id

    def with_overrides(self, *, kind: str | None = None, seed: int | None = None,
                       n: int | None = None, out: str | None = None) -> "ExperimentConfig":
        """Copy with CLI overrides applied; the hash records them."""
        data = self.model_dump(exclude={"config_hash"})
        applied = {}
        if kind is not None and kind != data["experiment"]["kind"]:
            if data["experiment"]["id"] == data["experiment"]["kind"]:
                data["experiment"]["id"] = kind
            data["experiment"]["kind"] = applied["kind"] = kind
        if seed is not None:
            data["seed"] = applied["seed"] = seed
        if n is not None:
            data["grid"]["n"] = applied["n"] = n
        if out is not None:
            data["output"]["dir"] = out
        cfg = _validate(data)
        h = self.config_hash
        if applied:
            h = hashlib.sha256((h + json.dumps(applied, sort_keys=True)).encode()).hexdigest()
        return cfg.model_copy(update={"config_hash": h})


def _validate(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        parts = []
        for err in exc.errors():
            where = ".".join(str(x) for x in err["loc"])
            parts.append(f"{where}: {err['msg']}")
        raise ConfigError("invalid config: " + "; ".join(parts)) from exc


def hash_bytes(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def parse_config(text: str | bytes) -> ExperimentConfig:
    raw = text.encode() if isinstance(text, str) else text
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        # tomli's message already carries "(at line L, column C)"
        raise ConfigError(f"config parse error: {exc}") from exc
    if "config_hash" in data:
        raise ConfigError("invalid config: config_hash is computed, not configurable")
    cfg = _validate(data)
    return cfg.model_copy(update={"config_hash": hash_bytes(raw)})


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(raw)
