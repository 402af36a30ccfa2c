"""
Command dispatch behind the CLI.

Every command writes its artifacts and a flat key=value ``report.txt`` into the output
directory. Exit status: 0 when every requested check passes, 1 when a check fails,
2 when the run stops on an error.
"""
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from app.core.config import settings
from app.core.exceptions import ControllabilityError, ConvergenceError, ExitGameError, ProblemDefinitionError
from app.models.enums import Command, Convention, NodeRole, Player, ReportStatus
from app.models.game import GameProblem
from app.models.signals import ControlSignal
from app.schemas.problem_file import ProblemFile, SimulateSpec
from app.schemas.run_config import RunConfig
from app.schemas.scheme import SchemeParams
from app.services.certification import certify_assumption2
from app.services.grid import build_grid, interpolate, write_grid_csv
from app.services.hamiltonian import Costate, saddle_point
from app.services.oracle import brute_value, exactify
from app.services.problem import (
    validate_bounds,
    validate_controllability,
    validate_cost_split,
    validate_exit_costs,
)
from app.services.problem_loader import load_problem
from app.services.reference import exit_time_eikonal
from app.services.simulator import dpp_residual, play, probe_family
from app.services.solver import solve, solve_both
from app.services.strategy import ConstantStrategy, feedback_strategy, soner_params
from app.services.trajectory import step_count

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_ERROR = 2

SWEEP_LEVELS = 3
ORACLE_TOLERANCE = 1e-9
DPP_PROBES = 2
DPP_NODES = 64
WORST_CASE_PROBES = 4


class RunContext:
    """Problem, file schema and the effective settings of one invocation"""

    def __init__(self, config: RunConfig, problem: GameProblem, spec: ProblemFile):
        self.config = config
        self.problem = problem
        self.spec = spec
        self.lines: List[str] = []

        scheme = spec.scheme
        self.nodes = config.grid or scheme.grid or [settings.DEFAULT_NODES]
        self.params = SchemeParams(
            dt=config.dt or scheme.dt or settings.DEFAULT_DT,
            tol=config.tol or scheme.tol or settings.DEFAULT_TOL,
            max_iters=config.max_iters or scheme.max_iters or settings.DEFAULT_MAX_ITERS,
        )
        self.horizon = config.horizon or scheme.horizon or math.log(1e3) / problem.costs.discount_lambda
        self.samples = spec.verify.samples

    @property
    def out_dir(self) -> Path:
        return self.config.out_dir

    def scheme(self, convention: Convention, **update) -> SchemeParams:
        return self.params.model_copy(update={"convention": convention, **update})

    def add(self, *lines: str):
        self.lines.extend(lines)


def _solve_lower(ctx: RunContext):
    grid = build_grid(ctx.problem, ctx.nodes)
    lower, report = solve(ctx.problem, grid, ctx.scheme(Convention.LOWER))
    write_grid_csv(lower, ctx.out_dir / "value_lower.csv")
    ctx.add(*report.to_key_values("solve.lower"))
    return lower, report


def _run_solve(ctx: RunContext) -> bool:
    validation = validate_exit_costs(ctx.problem, ctx.samples)
    ctx.add(*validation.to_key_values("validation.exit_costs"))
    _, report = _solve_lower(ctx)
    return report.converged


def _run_solve_both(ctx: RunContext) -> bool:
    p = ctx.problem
    validation = validate_exit_costs(p, ctx.samples)
    ctx.add(*validation.to_key_values("validation.exit_costs"))
    result = solve_both(p, build_grid(p, ctx.nodes), ctx.params)
    write_grid_csv(result.lower, ctx.out_dir / "value_lower.csv")
    write_grid_csv(result.upper, ctx.out_dir / "value_upper.csv")
    ctx.add(*result.lower_report.to_key_values("solve.lower"))
    ctx.add(*result.upper_report.to_key_values("solve.upper"))
    costate = Costate(p=(0.0,) * p.n, q=(0.0,) * p.m)
    saddle = saddle_point(p, p.omega_x.center, p.omega_y.center, costate)
    ctx.add(f"gap={result.gap:.12g}", f"hamiltonian.gap_at_center={saddle.gap:.12g}")
    return result.lower_report.converged and result.upper_report.converged


def _parse_choice(text: str, size: int, label: str) -> Optional[int]:
    if not text.startswith("constant:"):
        return None
    try:
        index = int(text.split(":", 1)[1])
    except ValueError as e:
        raise ProblemDefinitionError(f"{label} '{text}' needs an integer index") from e
    if not 0 <= index < size:
        raise ProblemDefinitionError(f"{label} '{text}': index outside 0..{size - 1}")
    return index


def _simulate_entries(ctx: RunContext) -> List[SimulateSpec]:
    if ctx.spec.simulate:
        return ctx.spec.simulate
    p = ctx.problem
    return [SimulateSpec(x0=p.omega_x.center.tolist(), y0=p.omega_y.center.tolist())]


def _run_simulate(ctx: RunContext) -> bool:
    p = ctx.problem
    dt = ctx.params.dt
    lower, _ = _solve_lower(ctx)
    rng = np.random.default_rng(ctx.config.seed)

    for idx, entry in enumerate(_simulate_entries(ctx)):
        horizon = entry.horizon or ctx.horizon
        steps = step_count(horizon, dt)
        index = _parse_choice(entry.strategy, len(p.controls_a), "strategy")
        if index is not None:
            strategy = ConstantStrategy(p, Player.X, dt, index)
        elif entry.strategy == "feedback":
            strategy = feedback_strategy(p, lower, Player.X, dt, Convention.LOWER)
        else:
            raise ProblemDefinitionError(f"unknown strategy '{entry.strategy}' (feedback | constant:<i>)")

        opponent_index = _parse_choice(entry.opponent, len(p.controls_b), "opponent")
        if opponent_index is not None:
            opponents = [ControlSignal.constant(p.controls_b, opponent_index, steps, dt)]
        elif entry.opponent == "random":
            opponents = [ControlSignal.random(p.controls_b, steps, dt, rng)]
        elif entry.opponent == "worst":
            opponents = probe_family(p, Player.Y, steps, dt, WORST_CASE_PROBES, rng)
        else:
            raise ProblemDefinitionError(f"unknown opponent '{entry.opponent}' (worst | random | constant:<i>)")

        outcomes = [play(p, entry.x0, entry.y0, strategy, beta, horizon) for beta in opponents]
        outcome = max(outcomes, key=lambda o: o.cost)
        outcome.to_csv(ctx.out_dir / f"outcome_{idx}.csv")
        value = interpolate(lower, np.concatenate([entry.x0, entry.y0]))
        ctx.add(*outcome.summary().to_key_values(f"simulate.{idx}"))
        ctx.add(f"simulate.{idx}.value_lower={value:.12g}")
        logger.info(f"Simulation {idx}: {outcome.exit_case.value}, cost {outcome.cost:.6f} (value {value:.6f})")
    return True


def _dpp_nodes(roles: np.ndarray) -> np.ndarray:
    interior = np.flatnonzero(roles == NodeRole.INTERIOR.value)
    if interior.size <= DPP_NODES:
        return interior
    return interior[np.unique(np.linspace(0, interior.size - 1, DPP_NODES).astype(int))]


def _run_verify(ctx: RunContext) -> bool:
    p = ctx.problem
    config = ctx.config
    dt = ctx.params.dt
    statuses = []

    for label, report in (
        ("validation.exit_costs", validate_exit_costs(p, ctx.samples)),
        ("validation.controllability", validate_controllability(p, ctx.samples)),
        ("validation.bounds", validate_bounds(p, ctx.samples)),
        ("validation.cost_split", validate_cost_split(p)),
    ):
        ctx.add(*report.to_key_values(label))
        statuses.append(report.status)

    lower, report = _solve_lower(ctx)
    boundary_ok = report.boundary_violations == 0

    coords = lower.coordinates()
    residuals = [
        dpp_residual(p, lower, coords[i], dt, DPP_PROBES, dt, Convention.LOWER, config.seed)
        for i in _dpp_nodes(lower.flat_roles)
    ]
    dpp_max = max(residuals, default=0.0)
    dpp_bound = ctx.params.tol + 10.0 * dt ** 2
    dpp_ok = dpp_max <= dpp_bound
    ctx.add(
        f"dpp.nodes={len(residuals)}",
        f"dpp.max_residual={dpp_max:.12g}",
        f"dpp.bound={dpp_bound:.12g}",
        f"dpp.status={(ReportStatus.PASS if dpp_ok else ReportStatus.FAIL).value}",
    )

    verify = ctx.spec.verify
    trials = config.trials or verify.trials or settings.CERT_TRIALS
    t_star = verify.t_star or ctx.horizon
    try:
        sp_x = soner_params(p, Player.X, t_star, ctx.samples, verify.eps_mode)
        sp_y = soner_params(p, Player.Y, t_star, ctx.samples, verify.eps_mode) if p.m else None
    except ControllabilityError as e:
        logger.warning(f"Certification skipped: {e}")
        ctx.add("certification.status=SKIPPED", f"certification.note={e}")
    else:
        cert = certify_assumption2(
            p, trials, sp_x, dt, ctx.horizon,
            delta=verify.delta or settings.CERT_DELTA, seed=config.seed, sp_y=sp_y,
        )
        ctx.add(*cert.to_key_values("certification"))
        statuses.append(cert.status)

    return boundary_ok and dpp_ok and ReportStatus.FAIL not in statuses


def _run_oracle(ctx: RunContext) -> bool:
    p = ctx.problem
    grid = build_grid(p, ctx.nodes)
    game = exactify(p, grid, ctx.params)
    ctx.add(f"oracle.states={len(game.states)}")
    ok = True
    for convention in (Convention.LOWER, Convention.UPPER):
        solved, report = solve(p, grid, ctx.scheme(convention, tol=min(ctx.params.tol, 1e-12)))
        brute = brute_value(game, convention)
        difference = max(abs(solved.flat_values[s] - v) for s, v in brute.items())
        passed = difference <= ORACLE_TOLERANCE
        ok = ok and passed
        name = convention.value.lower()
        ctx.add(
            f"oracle.{name}.max_difference={difference:.12g}",
            f"oracle.{name}.iterations={report.iterations}",
            f"oracle.{name}.status={(ReportStatus.PASS if passed else ReportStatus.FAIL).value}",
        )
    return ok


def _run_sweep(ctx: RunContext) -> bool:
    p = ctx.problem
    base = ctx.nodes if len(ctx.nodes) > 1 else ctx.nodes * p.dim
    reference = exit_time_eikonal(ctx.spec) if ctx.spec.reference is not None else None

    levels = []
    for level in range(SWEEP_LEVELS):
        nodes = [(n - 1) * 2 ** level + 1 for n in base]
        dt = ctx.params.dt / 2 ** level
        solved, report = solve(p, build_grid(p, nodes), ctx.scheme(Convention.LOWER, dt=dt))
        levels.append((nodes, dt, solved, report))

    finest = levels[-1][2]
    rows = []
    for level, (nodes, dt, solved, report) in enumerate(levels):
        coords = solved.coordinates()
        target = reference(coords) if reference is not None else interpolate(finest, coords)
        rows.append(
            {
                "level": level,
                "nodes": solved.size,
                "spacing": float(np.min(solved.spacing)),
                "dt": dt,
                "iterations": report.iterations,
                "error": float(np.max(np.abs(solved.flat_values - target))),
            }
        )
    frame = pd.DataFrame(rows)
    frame.to_csv(ctx.out_dir / "sweep.csv", index=False, float_format="%.12g")

    errors = frame["error"].to_numpy()
    compared = errors if reference is not None else errors[:-1]
    monotone = bool(np.all(np.diff(compared) <= 0))
    ctx.add(f"sweep.reference={'exit_time_eikonal' if reference is not None else 'finest_grid'}")
    for row in rows:
        ctx.add(*(f"sweep.{row['level']}.{key}={_format(value)}" for key, value in row.items() if key != "level"))
    ctx.add(f"sweep.monotone={'true' if monotone else 'false'}")
    return monotone


def _format(value) -> str:
    return f"{value:.12g}" if isinstance(value, float) else str(value)


COMMANDS: Dict[Command, Callable[[RunContext], bool]] = {
    Command.SOLVE: _run_solve,
    Command.SOLVE_BOTH: _run_solve_both,
    Command.SIMULATE: _run_simulate,
    Command.VERIFY: _run_verify,
    Command.ORACLE: _run_oracle,
    Command.SWEEP: _run_sweep,
}


def run(config: RunConfig) -> int:
    out_dir = config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    header = [f"command={config.command.value}", f"problem={config.problem_path.name}", f"seed={config.seed}"]
    body: List[str] = []

    try:
        problem, spec = load_problem(config.problem_path)
        ctx = RunContext(config, problem, spec)
        logger.info(f"Running {config.command.value} on '{problem.name}' into {out_dir}")
        try:
            passed = COMMANDS[config.command](ctx)
        finally:
            body = ctx.lines
        status, code = ("ok", EXIT_OK) if passed else ("failed", EXIT_CHECKS_FAILED)
    except ConvergenceError as e:
        logger.error(f"{config.command.value} stopped: {e}")
        if e.report is not None:
            body = body + e.report.to_key_values("solve.failed")
        body = body + [f"error={e}"]
        status, code = "error", EXIT_ERROR
    except ExitGameError as e:
        logger.error(f"{config.command.value} stopped: {e}")
        body = body + [f"error={e}"]
        status, code = "error", EXIT_ERROR

    report_path = out_dir / "report.txt"
    report_path.write_text("\n".join(header + [f"status={status}"] + body) + "\n", encoding="utf-8")
    logger.info(f"{config.command.value} finished with status {status}; report at {report_path}")
    return code
