from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from app.core.config import settings
from app.core.exceptions import MarginError
from app.models.enums import Convention, EpsMode


class SchemeParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: PositiveFloat = Field(settings.DEFAULT_DT, description="Time step")
    tol: PositiveFloat = Field(settings.DEFAULT_TOL, description="Sup-norm fixed-point tolerance")
    max_iters: PositiveInt = Field(settings.DEFAULT_MAX_ITERS, description="Sweep limit")
    convention: Convention = Convention.LOWER


class SonerParams(BaseModel):
    """Per-leg horizon and insertion gain of the boundary tuning for one player"""
    model_config = ConfigDict(frozen=True)

    t_star: PositiveFloat
    k_gain: Optional[PositiveFloat] = Field(None, description="Derived as 2/(zeta - c_tilde) when omitted")
    zeta: float = Field(1.0, ge=0.0, description="Inward margin at the boundary")
    c_tilde: float = Field(0.0, ge=0.0, description="Bound on the coupling term |D b . xi|")
    eps_mode: EpsMode = EpsMode.GRONWALL_BOUND

    # probe family of the SAMPLED epsilon estimate
    probes: PositiveInt = 16
    probe_dt: PositiveFloat = 0.01
    seed: int = 0

    @model_validator(mode="after")
    def _check_margin(self):
        if self.k_gain is None and self.zeta <= self.c_tilde:
            raise MarginError(
                f"inward margin zeta={self.zeta:.6g} does not exceed the coupling bound "
                f"c_tilde={self.c_tilde:.6g}; the insertion gain is undefined"
            )
        return self

    @property
    def gain(self) -> float:
        if self.k_gain is not None:
            return self.k_gain
        return 2.0 / (self.zeta - self.c_tilde)
