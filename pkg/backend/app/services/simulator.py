"""
Playthroughs of the game: Euler integration of both players, exit classification and
the discounted cost

    J = int_0^tau exp(-lambda t) l dt + exp(-lambda tau) psi

with psi = psi_X, psi_Y or psi_XY by who left first (simultaneous when the exit times
differ by at most dt) and no exit term when nobody leaves before the horizon.
"""
import logging
import math

import numpy as np

from app.core.exceptions import SimulationError
from app.models.enums import Convention, ExitCase, Player
from app.models.game import Box, GameProblem
from app.models.grid import ValueGrid
from app.models.outcome import GameOutcome
from app.models.signals import ControlSignal
from app.services.grid import interpolate
from app.services.strategy import StrategyMap, feedback_strategy
from app.services.trajectory import JointStepper, discount_weight, state_at, step_count

logger = logging.getLogger(__name__)

START_TOL = 1e-9


def _start(box: Box, z, label: str) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != box.dim:
        raise SimulationError(f"{label} has {z.shape[0]} coordinates, expected {box.dim}")
    if box.dim and box.exterior_distance(z) > START_TOL:
        raise SimulationError(f"{label}={z.tolist()} lies outside the closed domain")
    return box.clamp(z)


def integrate(p: GameProblem, x0, y0, alpha: ControlSignal, beta: ControlSignal, horizon: float) -> GameOutcome:
    if horizon <= 0:
        raise SimulationError(f"horizon must be positive, got {horizon}")
    dt = alpha.dt
    if abs(beta.dt - dt) > 1e-12 * max(1.0, dt):
        raise SimulationError(f"signals have different steps: {alpha.dt} and {beta.dt}")
    x0 = _start(p.omega_x, x0, "x0")
    y0 = _start(p.omega_y, y0, "y0")

    lam = p.costs.discount_lambda
    stepper = JointStepper(p, x0, y0)
    times, xs, ys, a_rows, b_rows = [0.0], [x0], [y0], [], []
    running = 0.0

    for k in range(step_count(horizon, dt)):
        t = k * dt
        h = min(dt, horizon - t)
        a, b = alpha.sample(k), beta.sample(k)
        ongoing = not stepper.game_over
        if ongoing:
            stage = float(p.costs.running(stepper.x.state[None, :], stepper.y.state[None, :], a, b)[0])
        stepper.step(a, b, t, h)
        if ongoing:
            running += stage * discount_weight(lam, t, min(h, stepper.tau - t))
        times.append(t + h)
        xs.append(stepper.x.state.copy())
        ys.append(stepper.y.state.copy())
        a_rows.append(a)
        b_rows.append(b)
        if stepper.finished:
            break

    times = np.asarray(times)
    path_x = np.asarray(xs).reshape(len(times), p.n)
    path_y = np.asarray(ys).reshape(len(times), p.m)
    tau_x, tau_y = stepper.x.tau, stepper.y.tau

    tail = 0.0
    exit_cost = 0.0
    if math.isinf(tau_x) and math.isinf(tau_y):
        exit_case = ExitCase.NEVER
        tail = p.dynamics.bound_m * math.exp(-lam * horizon) / lam
        stop_x, stop_y = path_x[-1], path_y[-1]
    elif abs(tau_x - tau_y) <= dt:
        exit_case = ExitCase.SIMULTANEOUS
        stop_x, stop_y = stepper.x.exit_state, stepper.y.exit_state
        psi = p.costs.exit_xy(stop_x[None, :], stop_y[None, :])
    elif tau_x < tau_y:
        exit_case = ExitCase.X_ONLY
        stop_x, stop_y = stepper.x.exit_state, state_at(times, path_y, tau_x)
        psi = p.costs.exit_x(stop_x[None, :], stop_y[None, :])
    else:
        exit_case = ExitCase.Y_ONLY
        stop_x, stop_y = state_at(times, path_x, tau_y), stepper.y.exit_state
        psi = p.costs.exit_y(stop_x[None, :], stop_y[None, :])
    if exit_case != ExitCase.NEVER:
        exit_cost = math.exp(-lam * min(tau_x, tau_y)) * float(np.asarray(psi)[0])

    return GameOutcome(
        times=times,
        path_x=path_x,
        path_y=path_y,
        controls_a=np.asarray(a_rows).reshape(len(a_rows), p.controls_a.dim),
        controls_b=np.asarray(b_rows).reshape(len(b_rows), p.controls_b.dim),
        tau_x=tau_x,
        tau_y=tau_y,
        exit_case=exit_case,
        running_cost=running,
        exit_cost=exit_cost,
        tail_bound=tail,
        stop_x=np.asarray(stop_x, dtype=float).reshape(p.n),
        stop_y=np.asarray(stop_y, dtype=float).reshape(p.m),
    )


def play(p: GameProblem, x0, y0, strategy: StrategyMap, opponent: ControlSignal, horizon: float) -> GameOutcome:
    """Let the strategy answer the opponent signal step by step, then integrate"""
    if horizon <= 0:
        raise SimulationError(f"horizon must be positive, got {horizon}")
    opponent = opponent.extended(step_count(horizon, opponent.dt))
    response = strategy.bind(x0, y0).respond(opponent)
    if strategy.player == Player.X:
        return integrate(p, x0, y0, response, opponent, horizon)
    return integrate(p, x0, y0, opponent, response, horizon)


def probe_family(p: GameProblem, player: Player, count: int, dt: float, probes: int, rng: np.random.Generator):
    """Constant signals of every control of the player followed by seeded random signals"""
    controls = p.controls(player)
    family = [ControlSignal.constant(controls, i, count, dt) for i in range(len(controls))]
    family += [ControlSignal.random(controls, count, dt, rng) for _ in range(probes)]
    return family


def truncated_payoff(p: GameProblem, g: ValueGrid, outcome: GameOutcome, horizon: float) -> float:
    """Running cost up to min(tau, t) plus the discounted grid value at that state"""
    stop = min(outcome.tau, horizon)
    return outcome.running_cost + math.exp(-p.costs.discount_lambda * stop) * interpolate(g, outcome.stop_state)


def dpp_residual(
    p: GameProblem,
    g: ValueGrid,
    z0,
    t: float,
    probe_controls: int,
    dt: float,
    convention: Convention = Convention.LOWER,
    seed: int = 0,
) -> float:
    """
    |v(z0) - opt J_t| where the inner player follows the feedback of g and the outer
    player ranges over constant and random probe signals.
    """
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    x0, y0 = z0[: p.n], z0[p.n:]
    steps = max(1, int(round(t / dt)))
    horizon = steps * dt
    rng = np.random.default_rng(seed)

    if convention == Convention.LOWER:
        inner = feedback_strategy(p, g, Player.X, dt, convention)
        outer = Player.Y
    else:
        inner = feedback_strategy(p, g, Player.Y, dt, convention)
        outer = Player.X

    payoffs = [
        truncated_payoff(p, g, play(p, x0, y0, inner, signal, horizon), horizon)
        for signal in probe_family(p, outer, steps, dt, probe_controls, rng)
    ]
    best = max(payoffs) if convention == Convention.LOWER else min(payoffs)
    return abs(interpolate(g, z0) - best)
