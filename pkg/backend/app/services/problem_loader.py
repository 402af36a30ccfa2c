"""
Problem-file loading: TOML text -> ProblemFile schema -> GameProblem.
"""
import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import ValidationError

from app.core.exceptions import ConfigParseError
from app.models.enums import CostSplit
from app.models.game import Box, ControlSet, Costs, GameProblem
from app.schemas.problem_file import ProblemFile
from app.services.builtins import make_dynamics, make_exit_cost, make_running_cost
from app.services.problem import detect_cost_split

logger = logging.getLogger(__name__)

LINE_PATTERN = re.compile(r"line (\d+)")


def _line_of(text: str, loc) -> Optional[int]:
    """Line of the deepest key of a validation error location, searched in order; None when absent"""
    lines = text.splitlines()
    found, start = None, 0
    for part in loc:
        if not isinstance(part, str):
            continue
        name = re.escape(part)
        key = re.compile(rf"^\s*(\[+\s*([\w.]+\.)?{name}\s*\]+|\"?{name}\"?\s*=)")
        for number in range(start, len(lines)):
            if key.match(lines[number]):
                found, start = number + 1, number + 1
                break
    return found


def parse_problem_text(text: str, source: str = "<string>") -> ProblemFile:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = LINE_PATTERN.search(str(e))
        raise ConfigParseError(source, str(e), int(match.group(1)) if match else None) from e

    try:
        return ProblemFile.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
        )
        located = (_line_of(text, error["loc"]) for error in e.errors())
        raise ConfigParseError(source, problems, next((line for line in located if line is not None), None)) from e


def load_problem_file(path: Union[str, Path]) -> ProblemFile:
    path = Path(path)
    if not path.exists():
        raise ConfigParseError(str(path), "problem file does not exist")
    return parse_problem_text(path.read_text(encoding="utf-8"), str(path))


def build_problem(spec: ProblemFile) -> GameProblem:
    omega_x = Box(lo=tuple(spec.omega_x.lo), hi=tuple(spec.omega_x.hi))
    omega_y = Box(lo=tuple(spec.omega_y.lo), hi=tuple(spec.omega_y.hi))
    controls_a = ControlSet(points=tuple(tuple(p) for p in spec.controls.A))
    controls_b = ControlSet(points=tuple(tuple(p) for p in spec.controls.B))

    dynamics = make_dynamics(spec.dynamics, omega_x.dim, omega_y.dim, controls_a.dim, controls_b.dim)
    declared = spec.costs.decoupled
    costs = Costs(
        running=make_running_cost(spec.costs.running),
        exit_x=make_exit_cost(spec.costs.exit_x, "exitX"),
        exit_y=make_exit_cost(spec.costs.exit_y, "exitY"),
        exit_xy=make_exit_cost(spec.costs.exit_xy, "exitXY"),
        discount_lambda=spec.costs.discount,
        split=CostSplit.NONE if declared == "auto" else CostSplit(declared),
    )
    problem = GameProblem(
        name=spec.name,
        omega_x=omega_x,
        omega_y=omega_y,
        dynamics=dynamics,
        controls_a=controls_a,
        controls_b=controls_b,
        costs=costs,
    )

    if declared == "auto":
        split = detect_cost_split(problem)
        problem = problem.model_copy(update={"costs": costs.model_copy(update={"split": split})})
        logger.info(f"Detected running-cost split for {spec.name}: {split.value}")
    return problem


def load_problem(path: Union[str, Path]) -> Tuple[GameProblem, ProblemFile]:
    spec = load_problem_file(path)
    problem = build_problem(spec)
    logger.info(f"Loaded problem '{problem.name}' (n={problem.n}, m={problem.m}) from {path}")
    return problem, spec
