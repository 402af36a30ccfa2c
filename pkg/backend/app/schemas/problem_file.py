"""
Schema of the TOML problem-definition file.

    name = "eikonal_1d"

    [omegaX]            # box Omega_X
    lo = [0.0]
    hi = [1.0]

    [omegaY]            # box Omega_Y (lo = hi = [] for a pure disturbance player)
    lo = [-1.0]
    hi = [1.0]

    [controls]
    A = [[-1.0], [0.0], [1.0]]
    B = [[0.0]]

    [dynamics]
    kind = "eikonal"    # eikonal | linear | surge_tank | polynomial
    lipschitz = 0.0
    bound = 1.0
    coupling = [[0.0]]  # optional D, maps b into x-velocity units
    [dynamics.params]
    speed_x = 1.0

    [costs]
    discount = 1.0
    decoupled = "auto"  # auto | none | state_control | player
    running = { kind = "constant", value = 1.0 }
    exitX = { kind = "constant", value = 0.0 }
    exitY = { kind = "polynomial", terms = [{ coef = 1.0, powers = { y0 = 2 } }] }
    exitXY = { kind = "constant", value = 0.0 }

Optional tables: [scheme], [verify], [reference] and [[simulate]].
"""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from app.models.enums import EpsMode
from app.services.polynomial import Term


class BoxSpec(BaseModel):
    lo: List[float] = Field(default_factory=list)
    hi: List[float] = Field(default_factory=list)


class ControlsSpec(BaseModel):
    A: List[List[float]]
    B: List[List[float]]


class DynamicsSpec(BaseModel):
    kind: Literal["eikonal", "linear", "surge_tank", "polynomial"]
    lipschitz: float = Field(..., ge=0.0, description="Declared Lipschitz constant L")
    bound: PositiveFloat = Field(..., description="Declared bound M on the drifts")
    coupling: Optional[List[List[float]]] = Field(None, description="Coupling matrix D")
    params: Dict[str, Any] = Field(default_factory=dict)
    x: List[List[Term]] = Field(default_factory=list, description="Polynomial x-drift per component")
    y: List[List[Term]] = Field(default_factory=list, description="Polynomial y-drift per component")


class CostSpec(BaseModel):
    kind: Literal["constant", "polynomial"] = "constant"
    value: float = 0.0
    terms: List[Term] = Field(default_factory=list)


class CostsSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    discount: PositiveFloat
    decoupled: Literal["auto", "none", "state_control", "player"] = "auto"
    running: CostSpec = Field(default_factory=CostSpec)
    exit_x: CostSpec = Field(default_factory=CostSpec, alias="exitX")
    exit_y: CostSpec = Field(default_factory=CostSpec, alias="exitY")
    exit_xy: CostSpec = Field(default_factory=CostSpec, alias="exitXY")


class SchemeSpec(BaseModel):
    grid: Optional[List[PositiveInt]] = None
    dt: Optional[PositiveFloat] = None
    tol: Optional[PositiveFloat] = None
    max_iters: Optional[PositiveInt] = None
    horizon: Optional[PositiveFloat] = None


class VerifySpec(BaseModel):
    trials: Optional[PositiveInt] = None
    delta: Optional[PositiveFloat] = None
    t_star: Optional[PositiveFloat] = None
    eps_mode: EpsMode = EpsMode.GRONWALL_BOUND
    samples: PositiveInt = 5


class ReferenceSpec(BaseModel):
    kind: Literal["exit_time_eikonal"]


class SimulateSpec(BaseModel):
    x0: List[float]
    y0: List[float] = Field(default_factory=list)
    strategy: str = Field("feedback", description="feedback | constant:<index>")
    opponent: str = Field("worst", description="worst | random | constant:<index>")
    horizon: Optional[PositiveFloat] = None


class ProblemFile(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    name: str = "game"
    omega_x: BoxSpec = Field(..., alias="omegaX")
    omega_y: BoxSpec = Field(default_factory=BoxSpec, alias="omegaY")
    controls: ControlsSpec
    dynamics: DynamicsSpec
    costs: CostsSpec
    scheme: SchemeSpec = Field(default_factory=SchemeSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)
    reference: Optional[ReferenceSpec] = None
    simulate: List[SimulateSpec] = Field(default_factory=list)
