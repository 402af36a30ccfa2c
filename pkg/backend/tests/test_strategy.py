import math

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import ControllabilityError, MarginError, ProblemDefinitionError, SimulationError
from app.models.enums import EpsMode, Player
from app.models.signals import ControlSignal
from app.schemas.scheme import SonerParams
from app.services.grid import build_grid
from app.services.simulator import integrate
from app.services.strategy import (
    ConstantStrategy,
    ReactiveStrategy,
    epsilon_bound,
    feedback_strategy,
    soner_params,
    soner_tuning,
    tune_control,
    tune_strategy,
)

DT = 0.02


@pytest.fixture
def pursuit(bundled):
    return bundled("decoupled_pursuit")[0]


def _shared_prefix_pair(p, steps, rng):
    beta = ControlSignal.random(p.controls_b, steps, DT, rng)
    other = ControlSignal.random(p.controls_b, steps, DT, rng)
    shared = int(rng.integers(0, steps + 1))
    other = other.model_copy(update={"indices": beta.indices[:shared] + other.indices[shared:]})
    return beta, other, shared


def test_signal_from_control_points(pursuit, tmp_path):
    signal = ControlSignal.from_points(pursuit.controls_b, [[1.0], [0.0], [-1.0]], DT)
    assert signal.indices == (2, 1, 0)
    assert signal.extended(5).indices == (2, 1, 0, 0, 0)
    assert signal.index_at(10) == 0

    frame = pd.read_csv(signal.to_csv(tmp_path / "beta.csv"))
    assert list(frame.columns) == ["step", "time", "u0"]
    assert list(frame["u0"]) == [1.0, 0.0, -1.0]

    with pytest.raises(ProblemDefinitionError):
        ControlSignal.from_points(pursuit.controls_b, [[0.5]], DT)


def test_soner_params_from_controllability(pursuit):
    sp = soner_params(pursuit, Player.X, 0.5)
    assert sp.zeta == pytest.approx(1.0)
    assert sp.c_tilde == 0.0
    assert sp.gain == pytest.approx(2.0)


def test_soner_params_need_an_inward_control(bundled):
    problem, _ = bundled("eikonal_1d")
    with pytest.raises(ControllabilityError):
        soner_params(problem, Player.Y, 0.5)


def test_margin_must_dominate_coupling():
    with pytest.raises(MarginError):
        SonerParams(t_star=1.0, zeta=0.5, c_tilde=0.5)
    assert SonerParams(t_star=1.0, zeta=0.5, c_tilde=0.5, k_gain=3.0).gain == 3.0


def test_epsilon_bound_modes(pursuit):
    z1, z2 = np.array([0.4]), np.array([0.43])
    gronwall = epsilon_bound(pursuit, z1, z2, SonerParams(t_star=0.5), Player.X)
    assert gronwall == pytest.approx(math.exp(0.5) * 0.03)
    # constant velocities keep the two paths parallel
    sampled = epsilon_bound(pursuit, z1, z2, SonerParams(t_star=0.5, eps_mode=EpsMode.SAMPLED), Player.X)
    assert sampled == pytest.approx(0.03)


def test_tuning_with_equal_starts_is_the_identity(pursuit):
    rng = np.random.default_rng(11)
    beta = ControlSignal.random(pursuit.controls_b, 50, DT, rng)
    sp = soner_params(pursuit, Player.Y, 0.5)
    assert tune_control(pursuit, beta, [0.01], [0.01], sp) == beta


def test_tuning_away_from_the_boundary_changes_nothing(pursuit):
    beta = ControlSignal.constant(pursuit.controls_b, 1, 50, DT)
    tuning = soner_tuning(pursuit, beta, [0.5], [0.52], soner_params(pursuit, Player.Y, 0.5))
    assert tuning.inserted == 0
    assert tuning.signal == beta


def test_tuning_inserts_inward_steps_before_the_reference_exits(pursuit):
    dt = 0.01
    beta = ControlSignal.constant(pursuit.controls_b, 0, 100, dt)
    sp = SonerParams(t_star=0.5, zeta=1.0)
    tuning = soner_tuning(pursuit, beta, [0.05], [0.02], sp)

    # eps = e^{0.5} * 0.03, held for ceil(2 * eps / dt) steps
    assert tuning.inserted == 10
    assert len(tuning.signal) == len(beta) + 10
    assert tuning.signal.indices[:2] == (0, 0)
    assert tuning.signal.indices[2:12] == (2,) * 10

    alpha = ControlSignal.constant(pursuit.controls_a, 1, 200, dt)
    reference = integrate(pursuit, [0.5], [0.05], alpha, beta, 1.5)
    tuned = integrate(pursuit, [0.5], [0.02], alpha, tuning.signal, 1.5)
    assert tuned.tau_y >= reference.tau_y - dt


def test_tuned_strategy_with_equal_starts_follows_gamma(pursuit):
    rng = np.random.default_rng(5)
    gamma = ReactiveStrategy.random(pursuit, Player.X, DT, 30, rng)
    beta = ControlSignal.random(pursuit.controls_b, 30, DT, rng)
    sp = soner_params(pursuit, Player.X, 0.5)
    tuned = tune_strategy(pursuit, gamma, [0.3], [0.3], [0.6], [0.6], sp)
    assert tuned.respond(beta) == gamma.bind([0.3], [0.6]).respond(beta)


def test_tune_strategy_only_tunes_x(pursuit):
    gamma = ConstantStrategy(pursuit, Player.Y, DT, 0)
    with pytest.raises(SimulationError):
        tune_strategy(pursuit, gamma, [0.3], [0.3], [0.6], [0.6], soner_params(pursuit, Player.X, 0.5))


def test_strategies_check_the_opponent_signal(bundled):
    problem, _ = bundled("eikonal_1d")
    strategy = ConstantStrategy(problem, Player.X, DT, 0)
    with pytest.raises(SimulationError):
        strategy.respond(ControlSignal.constant(problem.controls_a, 0, 5, DT))
    with pytest.raises(SimulationError):
        strategy.respond(ControlSignal.constant(problem.controls_b, 0, 5, 2 * DT))


def test_feedback_strategy_needs_a_start(pursuit):
    grid = build_grid(pursuit, 5)
    strategy = feedback_strategy(pursuit, grid, Player.X, DT)
    with pytest.raises(SimulationError):
        strategy.respond(ControlSignal.constant(pursuit.controls_b, 0, 5, DT))


def test_feedback_strategy_is_non_anticipating(pursuit):
    rng = np.random.default_rng(2024)
    grid = build_grid(pursuit, 11)
    grid = grid.with_values(rng.uniform(0.0, 2.0, grid.size))
    for player in (Player.X, Player.Y):
        strategy = feedback_strategy(pursuit, grid, player, DT)
        opponent = pursuit.controls(Player.Y if player == Player.X else Player.X)
        for _ in range(250):
            bound = strategy.bind(rng.uniform(0.0, 1.0, 1), rng.uniform(0.0, 1.0, 1))
            steps = 8
            first = ControlSignal.random(opponent, steps, DT, rng)
            second = ControlSignal.random(opponent, steps, DT, rng)
            shared = int(rng.integers(0, steps + 1))
            second = second.model_copy(update={"indices": first.indices[:shared] + second.indices[shared:]})
            assert bound.respond(first).agrees_with(bound.respond(second), shared)


def test_tuned_maps_are_non_anticipating(pursuit):
    rng = np.random.default_rng(7)
    sp_x = soner_params(pursuit, Player.X, 0.2)
    sp_y = soner_params(pursuit, Player.Y, 0.2)
    steps = 25
    for _ in range(500):
        x1, y1 = rng.uniform(0.0, 1.0, 1), rng.uniform(0.0, 1.0, 1)
        x2 = np.clip(x1 + rng.uniform(-0.05, 0.05, 1), 0.0, 1.0)
        y2 = np.clip(y1 + rng.uniform(-0.05, 0.05, 1), 0.0, 1.0)
        beta, other, shared = _shared_prefix_pair(pursuit, steps, rng)

        tuned_beta = tune_control(pursuit, beta, y1, y2, sp_y)
        tuned_other = tune_control(pursuit, other, y1, y2, sp_y)
        assert tuned_beta.agrees_with(tuned_other, shared)

        gamma = ReactiveStrategy.random(pursuit, Player.X, DT, steps, rng)
        tuned = tune_strategy(pursuit, gamma, x1, x2, y1, y2, sp_x, sp_y)
        response = tuned.respond(beta)
        assert len(response) == steps
        assert response.agrees_with(tuned.respond(other), shared)


def test_tune_strategy_checks_the_margin_even_with_a_given_gain(bundled):
    surge, _ = bundled("surge_tank")
    gamma = ReactiveStrategy.random(surge, Player.X, DT, 10, np.random.default_rng(0))
    thin = SonerParams(t_star=0.5, zeta=0.2, c_tilde=0.5, k_gain=3.0)
    with pytest.raises(MarginError):
        tune_strategy(surge, gamma, [0.0, 0.0], [0.0, 0.0], [], [], thin)

    wide = SonerParams(t_star=0.5, zeta=1.0, c_tilde=0.5, k_gain=3.0)
    assert tune_strategy(surge, gamma, [0.0, 0.0], [0.0, 0.0], [], [], wide).params.gain == 3.0


def test_sampled_deviation_never_exceeds_the_gronwall_bound(bundled):
    surge, _ = bundled("surge_tank")
    rng = np.random.default_rng(31)
    for trial in range(100):
        z1 = rng.uniform(-1.0, 1.0, 2)
        z2 = z1 + rng.uniform(-0.05, 0.05, 2)
        t_star = float(rng.choice([0.2, 0.5, 1.0]))
        gronwall = epsilon_bound(surge, z1, z2, SonerParams(t_star=t_star), Player.X)
        sampled = epsilon_bound(
            surge, z1, z2, SonerParams(t_star=t_star, eps_mode=EpsMode.SAMPLED, seed=trial), Player.X
        )
        assert sampled <= gronwall + 1e-12


@pytest.mark.parametrize("mode", [EpsMode.GRONWALL_BOUND, EpsMode.SAMPLED])
def test_epsilon_bound_grows_with_distance_and_horizon(bundled, mode):
    surge, _ = bundled("surge_tank")
    z1, direction = np.array([0.2, -0.3]), np.array([0.6, 0.8])
    by_distance = [
        epsilon_bound(surge, z1, z1 + r * direction, SonerParams(t_star=0.5, eps_mode=mode), Player.X)
        for r in (0.0, 0.01, 0.02, 0.05)
    ]
    assert by_distance == sorted(by_distance)
    by_horizon = [
        epsilon_bound(surge, z1, z1 + 0.03 * direction, SonerParams(t_star=t, eps_mode=mode), Player.X)
        for t in (0.1, 0.2, 0.5, 1.0)
    ]
    assert by_horizon == sorted(by_horizon)


def test_inserted_steps_per_leg_are_bounded(pursuit):
    dt = 0.01
    sp = SonerParams(t_star=0.5, zeta=1.0)
    beta = ControlSignal.constant(pursuit.controls_b, 0, 100, dt)
    rng = np.random.default_rng(17)
    for gap in rng.uniform(0.002, 0.05, 100):
        # the tuned start sits below the reference, both heading for the lower face
        tuning = soner_tuning(pursuit, beta, [0.02 + gap], [0.02], sp)
        ceiling = math.ceil(sp.gain * math.exp(pursuit.dynamics.lipschitz_l * sp.t_star) * gap / dt + 1e-9)
        assert 1 <= tuning.inserted <= ceiling
