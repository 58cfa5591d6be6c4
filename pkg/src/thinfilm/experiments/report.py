"""RunReport: headline metrics, each with the tolerance it was judged against."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .persist import SCHEMA_VERSION


@dataclass
class Metric:
    name: str
    value: object
    tolerance: str
    source: str
    passed: bool | None = None  # None: reported only, not judged

    def text_value(self) -> str:
        v = self.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return "%.17g" % v if math.isfinite(v) else str(v)
        return str(v)


@dataclass
class RunReport:
    experiment: str
    run_id: str
    config_hash: str
    seed: int
    metrics: list[Metric] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    error: str | None = None

    def add(self, name: str, value, tolerance: str, source: str, passed: bool | None = None) -> Metric:
        m = Metric(name, value, tolerance, source, None if passed is None else bool(passed))
        self.metrics.append(m)
        return m

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return self.error is None and all(m.passed is not False for m in self.metrics)

    @property
    def status(self) -> str:
        if self.error is not None:
            return "error"
        return "pass" if self.passed else "fail"

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 2, "error": 1}[self.status]

    def failures(self) -> list[Metric]:
        return [m for m in self.metrics if m.passed is False]

    def to_text(self) -> str:
        lines = [
            f"schema_version = {SCHEMA_VERSION}",
            f"experiment = {self.experiment}",
            f"id = {self.run_id}",
            f"config_hash = {self.config_hash}",
            f"seed = {self.seed}",
            f"status = {self.status}",
        ]
        if self.error is not None:
            lines.append(f"error = {' '.join(self.error.split())}")
        for a in self.artifacts:
            lines.append(f"artifact = {a}")
        for m in self.metrics:
            lines += [
                "",
                f"[metric {m.name}]",
                f"value = {m.text_value()}",
                f"tolerance = {m.tolerance}",
                f"source = {m.source}",
                f"pass = {'reported' if m.passed is None else str(m.passed).lower()}",
            ]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "id": self.run_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "artifacts": list(self.artifacts),
            "metrics": [
                {"name": m.name, "value": m.value if not isinstance(m.value, float) or math.isfinite(m.value)
                 else str(m.value), "tolerance": m.tolerance, "source": m.source, "pass": m.passed}
                for m in self.metrics
            ],
        }
