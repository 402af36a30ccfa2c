from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, Field

from app.models.enums import Convention, ExitCase, Player, ReportStatus


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    if value is None:
        return "none"
    return str(value)


def _flatten(prefix: str, value: Any, lines: List[str]):
    if isinstance(value, dict):
        for key, item in value.items():
            _flatten(f"{prefix}.{key}" if prefix else key, item, lines)
    elif isinstance(value, (list, tuple)):
        if value and all(not isinstance(v, (dict, list, tuple)) for v in value):
            lines.append(f"{prefix}=" + ",".join(_format_value(v) for v in value))
        else:
            lines.append(f"{prefix}.count={len(value)}")
            for i, item in enumerate(value):
                _flatten(f"{prefix}.{i}", item, lines)
    else:
        lines.append(f"{prefix}={_format_value(value)}")


class KeyValueReport(BaseModel):
    """Reports render as flat, deterministic key=value lines"""

    def to_key_values(self, prefix: str = "") -> List[str]:
        lines: List[str] = []
        _flatten(prefix, self.model_dump(mode="python"), lines)
        return lines


class CornerViolation(BaseModel):
    x: List[float]
    y: List[float]
    psi_y: float
    psi_xy: float
    psi_x: float


class ValidationReport(KeyValueReport):
    status: ReportStatus
    samples: int
    violations: List[CornerViolation] = Field(default_factory=list)


class FaceCheck(BaseModel):
    player: Player
    axis: int
    side: int
    point: List[float]
    inward_index: Optional[int] = Field(None, description="Control entering the domain")
    outward_index: Optional[int] = Field(None, description="Control leaving the domain")
    inward_speed: float = Field(..., description="Worst-case (over the opponent) inward normal speed")
    zeta: float = Field(..., description="Inward normal speed without the coupling term")
    c_tilde: float = Field(0.0, description="Largest |D b . xi| on this face")
    ok: bool


class ControllabilityReport(KeyValueReport):
    status: ReportStatus
    failures: int
    min_zeta: float
    c_tilde: float
    entries: List[FaceCheck] = Field(default_factory=list)


class BoundsReport(KeyValueReport):
    status: ReportStatus
    declared_m: float
    declared_l: float
    sampled_drift_max: float
    sampled_cost_max: float
    negative_cost_samples: int
    lipschitz_estimate: float
    notes: List[str] = Field(default_factory=list)


class CostSplitReport(KeyValueReport):
    status: ReportStatus
    declared: str
    detected: str


class SolveReport(KeyValueReport):
    convention: Convention
    iterations: int
    final_residual: float
    contraction_estimate: float
    discount_factor: float
    boundary_violations: int
    flagged_corners: int
    converged: bool


class CertCheck(BaseModel):
    name: str
    trials: int
    passed: int
    worst_margin: float = Field(..., description="Smallest slack observed; negative means violated")
    certified: bool
    note: str = ""


class CertReport(KeyValueReport):
    status: ReportStatus
    trials: int
    checks: List[CertCheck] = Field(default_factory=list)
    # longest inserted delay over the trials, reported apart from the deviation envelopes
    max_delay_x: float = 0.0
    max_delay_y: float = 0.0

    def check(self, name: str) -> CertCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


class OutcomeSummary(KeyValueReport):
    tau_x: float
    tau_y: float
    tau: float
    exit_case: ExitCase
    cost: float
    running_cost: float
    exit_cost: float
    tail_bound: float
