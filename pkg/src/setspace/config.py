"""Experiment configuration: one JSON document validated with pydantic."""

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from .protocols import ProtocolKind, ProtocolParams
from .shared_memory import SnapshotMode

SAFETY_CHECKS = (
    "validity",
    "k-agreement",
    "single-value-per-id",
    "late-deciders",
    "adoption",
    "register-usage",
    "replay",
    "collect-linearizability",
)
LIVENESS_CHECKS = ("termination",)
CheckName = Literal[
    "validity",
    "k-agreement",
    "termination",
    "single-value-per-id",
    "late-deciders",
    "adoption",
    "register-usage",
    "replay",
    "collect-linearizability",
]


class SuiteSpec(BaseModel):
    kind: Literal["m-bounded", "round-robin", "random", "mixed"] = "mixed"
    count: int = Field(10, ge=0)
    seed: int = 0
    step_cap: int = Field(100_000, gt=0)
    max_prefix: int | None = Field(None, ge=0)


class OutputSpec(BaseModel):
    dir: Path = Path("out")
    trace: bool = False


class ExperimentConfig(BaseModel):
    schema_version: Literal[1] = 1
    protocol: ProtocolKind = ProtocolKind.ONE_SHOT
    n: int
    m: int
    k: int
    s_instances: int = Field(1, ge=1)
    domain_size: int | None = None
    snapshot_mode: SnapshotMode = SnapshotMode.ATOMIC
    r: int | None = Field(None, ge=1)
    suite: SuiteSpec = Field(default_factory=SuiteSpec)
    checks: list[CheckName] | None = None
    depth_cap: int = Field(10_000, ge=0)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _check_params(self):
        if not 1 <= self.m <= self.k < self.n:
            raise ValueError(f"need 1 <= m <= k < n, got n={self.n} m={self.m} k={self.k}")
        if self.domain_size is not None and self.domain_size <= self.k:
            raise ValueError(f"domain_size must exceed k={self.k}, got {self.domain_size}")
        if not self.protocol.repeated and self.s_instances != 1:
            raise ValueError(f"{self.protocol.value} is one-shot, s_instances must be 1")
        return self

    def params(self) -> ProtocolParams:
        return ProtocolParams.for_protocol(
            self.protocol,
            n=self.n,
            k=self.k,
            m=self.m,
            s_instances=self.s_instances,
            domain_size=self.domain_size,
            snapshot_mode=self.snapshot_mode,
            r=self.r,
        )

    def selected_checks(self) -> list[str]:
        if self.checks is not None:
            return list(self.checks)
        checks = ["validity", "k-agreement", "termination", "late-deciders", "register-usage"]
        if self.protocol in (ProtocolKind.ONE_SHOT, ProtocolKind.REPEATED):
            checks.append("single-value-per-id")
        if self.protocol.repeated:
            checks.append("adoption")
        if self.snapshot_mode is SnapshotMode.DOUBLE_COLLECT:
            checks.append("collect-linearizability")
        return checks


def load_config(path: Path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        return ExperimentConfig.model_validate(json.load(f))
