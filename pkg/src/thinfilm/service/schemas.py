"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class Health(BaseModel):
    status: str = "ok"
    version: str


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: str = Field(..., description="TOML run configuration")
    kind: Optional[Literal["simulate", "blowup", "suppress", "dissipation_sweep", "verify"]] = None
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    n: Optional[int] = Field(None, ge=8)
    output_dir: Optional[str] = None
    wait: bool = True


class MetricOut(BaseModel):
    name: str
    value: Any
    tolerance: str
    source: str
    passed: Optional[bool] = Field(None, alias="pass")

    model_config = ConfigDict(populate_by_name=True)


class RunStatus(BaseModel):
    id: str
    experiment: str
    status: Literal["queued", "running", "pass", "fail", "error"]
    exit_code: Optional[int] = None
    config_hash: str
    seed: int
    output_dir: str
    artifacts: list[str] = []
    metrics: list[MetricOut] = []
    error: Optional[str] = None


class T0Request(BaseModel):
    model_config = ConfigDict(extra="forbid")

    B: float = Field(..., gt=0)
    p: float = 2.5
    A_p: float = 1.0
    mu: float = 1.0


class T0Response(BaseModel):
    T0_squared: float


class FlowConditionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    u0_l2: float = Field(..., gt=0)
    tau_star: float = Field(..., gt=0)
    flow_linf: float = Field(..., ge=0)
    p: float = 2.5
    A_p: float = 1.0
    C_T1: float = 1.0
    mu: float = 1.0


class FlowConditionResponse(BaseModel):
    T1: float
    terms: tuple[float, float, float]
    lhs: float
    satisfied: bool
    label: str = "condition satisfied under estimated constants"


class BlowupBoundsRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    l2: float = Field(..., gt=0)
    E: float
    p: float = 2.5


class BlowupBoundsResponse(BaseModel):
    T_max_upper: Optional[float]
    rate_exponent: float
    lower_curve_t: list[float] = []
    lower_curve: list[float] = []
