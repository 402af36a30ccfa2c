"""
Randomised certification of the tuning properties on nearby start pairs.

Per trial: random starts (x1, y1), perturbations (x2, y2) within `delta`, a random
opponent signal beta, a second signal sharing a random prefix with it and a random
reactive strategy gamma for X. The checks are

    prefix          tuned control and tuned strategy preserve shared prefixes
    exit_order_x    tau_X(x1 under tuned gamma) >= tau_X(x2 under gamma[beta_tuned]) - dt
    exit_order_y    tau_Y(y2 under beta_tuned) >= tau_Y(y1 under beta) - dt
    deviation_x     sup |x_tuned - x_ref| up to the first exit within exp(L T) |x1 - x2| + 2 dt M
    deviation_y     same for y
    running_cost    running-cost difference within the Lipschitz envelope; only certified
                    when the running cost separates between the players

The longest delay the tunings insert is reported next to the checks, not folded into
the deviation envelopes.
"""
import logging
import math
from typing import List, Optional

import numpy as np

from app.core.config import settings
from app.models.enums import CostSplit, Player, ReportStatus
from app.models.game import Box, GameProblem
from app.models.outcome import GameOutcome
from app.models.signals import ControlSignal
from app.schemas.reports import CertCheck, CertReport
from app.schemas.scheme import SonerParams
from app.services.simulator import integrate
from app.services.strategy import ReactiveStrategy, soner_params, soner_tuning, tune_strategy
from app.services.trajectory import discount_weight, step_count

logger = logging.getLogger(__name__)

CHECKS = ("prefix", "exit_order_x", "exit_order_y", "deviation_x", "deviation_y", "running_cost")


def _random_point(box: Box, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(box.lo_array, box.hi_array) if box.dim else np.zeros(0)


def _perturbed(box: Box, z: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    if box.dim == 0:
        return z.copy()
    direction = rng.normal(size=box.dim)
    direction /= max(np.linalg.norm(direction), 1e-300)
    return box.clamp(z + rng.uniform(0.0, delta) * direction)


def _capped(tau: float, horizon: float) -> float:
    return min(tau, horizon)


def _deviation(path_a: np.ndarray, path_b: np.ndarray, count: int) -> float:
    if path_a.shape[1] == 0:
        return 0.0
    count = min(count, path_a.shape[0], path_b.shape[0])
    return float(np.max(np.linalg.norm(path_a[:count] - path_b[:count], axis=-1)))


def _running_until(p: GameProblem, outcome: GameOutcome, t_end: float) -> float:
    total = 0.0
    lam = p.costs.discount_lambda
    for k in range(outcome.controls_a.shape[0]):
        t = outcome.times[k]
        if t >= t_end:
            break
        stage = p.costs.running(
            outcome.path_x[k][None, :], outcome.path_y[k][None, :], outcome.controls_a[k], outcome.controls_b[k]
        )
        total += float(stage[0]) * discount_weight(lam, t, min(outcome.times[k + 1], t_end) - t)
    return total


class _Tally:
    def __init__(self, name: str):
        self.name = name
        self.trials = 0
        self.passed = 0
        self.worst = math.inf

    def record(self, margin: float):
        self.trials += 1
        self.passed += int(margin >= 0)
        self.worst = min(self.worst, margin)

    def check(self, certified: bool = True, note: str = "") -> CertCheck:
        return CertCheck(
            name=self.name,
            trials=self.trials,
            passed=self.passed if certified else 0,
            worst_margin=self.worst if self.trials else 0.0,
            certified=certified,
            note=note,
        )


def certify_assumption2(
    p: GameProblem,
    trials: int,
    sp: SonerParams,
    dt: float = settings.DEFAULT_DT,
    horizon: Optional[float] = None,
    delta: float = settings.CERT_DELTA,
    seed: int = settings.SEED,
    sp_y: Optional[SonerParams] = None,
) -> CertReport:
    if horizon is None:
        horizon = math.log(1e3) / p.costs.discount_lambda
    rng = np.random.default_rng(seed)
    if sp_y is None and p.m > 0:
        sp_y = soner_params(p, Player.Y, sp.t_star, eps_mode=sp.eps_mode)
    steps = step_count(horizon, dt)
    m_bound = p.dynamics.bound_m
    growth = math.exp(p.dynamics.lipschitz_l * horizon)
    tallies = {name: _Tally(name) for name in CHECKS}
    max_delay_x = max_delay_y = 0.0

    for _ in range(trials):
        x1 = _random_point(p.omega_x, rng)
        y1 = _random_point(p.omega_y, rng)
        x2 = _perturbed(p.omega_x, x1, delta, rng)
        y2 = _perturbed(p.omega_y, y1, delta, rng)
        beta = ControlSignal.random(p.controls_b, steps, dt, rng)
        shared = int(rng.integers(0, steps + 1))
        other = ControlSignal.random(p.controls_b, steps, dt, rng)
        other = other.model_copy(update={"indices": beta.indices[:shared] + other.indices[shared:]})
        gamma = ReactiveStrategy.random(p, Player.X, dt, steps, rng)

        if sp_y is not None:
            tuning_y = soner_tuning(p, beta, y1, y2, sp_y)
            other_tuned = soner_tuning(p, other, y1, y2, sp_y).signal
        else:
            tuning_y, other_tuned = None, other
        beta_tuned = tuning_y.signal if tuning_y is not None else beta
        delay_y = (tuning_y.inserted if tuning_y is not None else 0) * dt

        tuned = tune_strategy(p, gamma, x1, x2, y1, y2, sp, sp_y)
        tuning_x = tuned.tune(beta)
        delay_x = tuning_x.inserted * dt
        prefix_ok = (
            tuning_x.signal.agrees_with(tuned.respond(other), shared)
            and (p.m == 0 or beta_tuned.agrees_with(other_tuned, shared))
        )
        tallies["prefix"].record(0.0 if prefix_ok else -1.0)

        actual = integrate(p, x1, y1, tuning_x.signal, beta, horizon)
        reference_alpha = gamma.bind(x2, y2).respond(beta_tuned)
        reference = integrate(p, x2, y2, reference_alpha, beta_tuned, horizon)

        tallies["exit_order_x"].record(
            _capped(actual.tau_x, horizon) - _capped(reference.tau_x, horizon) + dt
        )
        tallies["exit_order_y"].record(
            _capped(reference.tau_y, horizon) - _capped(actual.tau_y, horizon) + dt
        )

        t_cap = min(actual.tau, reference.tau, horizon)
        count = int(math.floor(t_cap / dt + 1e-9)) + 1
        dev_x = _deviation(actual.path_x, reference.path_x, count)
        dev_y = _deviation(actual.path_y, reference.path_y, count)
        slack = 2.0 * dt * m_bound
        env_x = growth * np.linalg.norm(x1 - x2) + slack
        env_y = growth * np.linalg.norm(y1 - y2) + slack
        max_delay_x = max(max_delay_x, delay_x)
        max_delay_y = max(max_delay_y, delay_y)
        tallies["deviation_x"].record(env_x - dev_x)
        tallies["deviation_y"].record(env_y - dev_y)

        cost_gap = abs(_running_until(p, actual, t_cap) - _running_until(p, reference, t_cap))
        env_cost = (
            horizon * p.dynamics.lipschitz_l * (dev_x + dev_y)
            + 4.0 * m_bound * (delay_x + delay_y)
            + slack
        )
        tallies["running_cost"].record(env_cost - cost_gap)

    separated = p.costs.split != CostSplit.NONE
    checks: List[CertCheck] = [tallies[name].check() for name in CHECKS[:-1]]
    checks.append(
        tallies["running_cost"].check(
            certified=separated,
            note="" if separated else "running cost is not separated between the players; not certified",
        )
    )

    failed = any(c.certified and c.passed < c.trials for c in checks)
    status = ReportStatus.FAIL if failed else (ReportStatus.PASS if separated else ReportStatus.WARN)
    if failed:
        logger.warning(f"{p.name}: certification failed: " + ", ".join(c.name for c in checks if c.certified and c.passed < c.trials))
    return CertReport(
        status=status, trials=trials, checks=checks, max_delay_x=max_delay_x, max_delay_y=max_delay_y
    )
