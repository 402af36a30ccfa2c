import math

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import SimulationError
from app.models.enums import Convention, ExitCase, Player
from app.models.game import Box
from app.models.signals import ControlSignal
from app.schemas.scheme import SchemeParams
from app.services.grid import build_grid, interpolate
from app.services.simulator import dpp_residual, integrate, play, probe_family
from app.services.solver import solve
from app.services.strategy import ConstantStrategy, feedback_strategy
from app.services.trajectory import crossing_fraction, discount_weight, step_count
from conftest import constant, make_game

DT = 0.01


def _constant(p, player, index, steps=100, dt=DT):
    return ControlSignal.constant(p.controls(player), index, steps, dt)


def test_x_exit_pays_running_cost_and_psi_x(bundled):
    p, _ = bundled("eikonal_1d")
    outcome = integrate(p, [0.3], [0.0], _constant(p, Player.X, 0), _constant(p, Player.Y, 0), 1.0)

    assert outcome.exit_case == ExitCase.X_ONLY
    assert outcome.tau_x == pytest.approx(0.3, abs=1e-9)
    assert math.isinf(outcome.tau_y)
    assert outcome.running_cost == pytest.approx(-math.expm1(-0.3), abs=1e-9)
    assert outcome.exit_cost == 0.0
    np.testing.assert_allclose(outcome.stop_x, [0.0])


def test_simultaneous_exit_uses_psi_xy(bundled):
    p, _ = bundled("decoupled_pursuit")
    outcome = integrate(p, [0.3], [0.3], _constant(p, Player.X, 0), _constant(p, Player.Y, 0), 1.0)
    assert outcome.exit_case == ExitCase.SIMULTANEOUS
    assert outcome.exit_cost == pytest.approx(math.exp(-0.3) * 0.5, abs=1e-9)
    # both players have exited, nothing left to integrate
    assert outcome.times[-1] == pytest.approx(0.31)


def test_exits_further_apart_than_a_step_are_not_simultaneous(bundled):
    p, _ = bundled("decoupled_pursuit")
    outcome = integrate(p, [0.3], [0.5], _constant(p, Player.X, 0), _constant(p, Player.Y, 0), 1.0)
    assert outcome.exit_case == ExitCase.X_ONLY
    assert outcome.exit_cost == pytest.approx(math.exp(-0.3) * 1.0, abs=1e-9)


def test_y_exit_uses_psi_y(bundled):
    p, _ = bundled("decoupled_pursuit")
    outcome = integrate(p, [0.5], [0.2], _constant(p, Player.X, 1), _constant(p, Player.Y, 0), 1.0)
    assert outcome.exit_case == ExitCase.Y_ONLY
    assert outcome.tau == pytest.approx(0.2, abs=1e-9)
    assert outcome.exit_cost == pytest.approx(math.exp(-0.2) * 0.2, abs=1e-9)
    np.testing.assert_allclose(outcome.stop_state, [0.5, 0.0], atol=1e-12)


def test_no_exit_reports_tail_bound(bundled):
    p, _ = bundled("decoupled_pursuit")
    outcome = integrate(p, [0.5], [0.5], _constant(p, Player.X, 1), _constant(p, Player.Y, 1), 0.5)
    assert outcome.exit_case == ExitCase.NEVER
    assert outcome.exit_cost == 0.0
    assert outcome.tail_bound == pytest.approx(3.0 * math.exp(-0.5))
    # l = x + y at rest
    assert outcome.running_cost == pytest.approx(-math.expm1(-0.5), abs=1e-9)
    assert len(outcome.times) == 51


def test_invalid_playthroughs(bundled):
    p, _ = bundled("decoupled_pursuit")
    alpha, beta = _constant(p, Player.X, 1), _constant(p, Player.Y, 1)
    with pytest.raises(SimulationError):
        integrate(p, [1.5], [0.5], alpha, beta, 0.5)
    with pytest.raises(SimulationError):
        integrate(p, [0.5], [0.5], alpha, beta, 0.0)
    with pytest.raises(SimulationError):
        integrate(p, [0.5], [0.5], alpha, _constant(p, Player.Y, 1, dt=0.02), 0.5)


def test_outcome_csv_has_summary(bundled, tmp_path):
    p, _ = bundled("eikonal_1d")
    outcome = integrate(p, [0.3], [0.0], _constant(p, Player.X, 0), _constant(p, Player.Y, 0), 0.5)
    path = outcome.to_csv(tmp_path / "outcome.csv")

    text = path.read_text()
    assert "# summary.exit_case=X_ONLY" in text
    frame = pd.read_csv(path, comment="#")
    assert list(frame.columns) == ["t", "x0", "y0", "a0", "b0"]
    assert len(frame) == len(outcome.times)
    assert np.isnan(frame["a0"].iloc[-1])


def test_play_extends_short_opponent_signals(bundled):
    p, _ = bundled("decoupled_pursuit")
    strategy = ConstantStrategy(p, Player.X, DT, 1)
    outcome = play(p, [0.5], [0.5], strategy, _constant(p, Player.Y, 2, steps=3), 0.2)
    # beta keeps its last sample: y moves up at unit speed
    np.testing.assert_allclose(outcome.path_y[-1], [0.7], atol=1e-12)


def test_feedback_play_follows_the_value(bundled):
    p, _ = bundled("eikonal_1d")
    sp = SchemeParams(dt=0.05, tol=1e-8)
    lower, _ = solve(p, build_grid(p, [21, 3]), sp)
    strategy = feedback_strategy(p, lower, Player.X, sp.dt)
    outcome = play(p, [0.3], [0.0], strategy, _constant(p, Player.Y, 0, dt=sp.dt), 2.0)

    assert outcome.exit_case == ExitCase.X_ONLY
    assert outcome.tau_x == pytest.approx(0.3, abs=sp.dt)
    assert outcome.cost == pytest.approx(interpolate(lower, np.array([0.3, 0.0])), abs=0.05)


@pytest.mark.parametrize("convention", [Convention.LOWER, Convention.UPPER])
def test_dpp_residual_at_interior_nodes(bundled, convention):
    p, _ = bundled("decoupled_pursuit")
    sp = SchemeParams(dt=0.02, tol=1e-10, convention=convention)
    solved, _ = solve(p, build_grid(p, 11), sp)

    bound = sp.tol + 10.0 * sp.dt ** 2
    for node in [(1, 1), (3, 7), (5, 5), (9, 2)]:
        z0 = solved.coordinates()[solved.node_index(node)]
        assert dpp_residual(p, solved, z0, sp.dt, 2, sp.dt, convention, seed=7) <= bound


def test_probe_family(bundled):
    p, _ = bundled("decoupled_pursuit")
    family = probe_family(p, Player.Y, 10, DT, 4, np.random.default_rng(0))
    assert len(family) == 3 + 4
    assert family[2].indices == (2,) * 10
    assert all(len(signal) == 10 for signal in family)


def test_trajectory_helpers():
    box = Box(lo=(0.0, 0.0), hi=(1.0, 1.0))
    assert crossing_fraction(box, np.array([0.5, 0.9]), np.array([0.5, 1.3])) == pytest.approx(0.25)
    assert crossing_fraction(box, np.array([0.5, 0.5]), np.array([0.6, 0.6])) == 1.0
    assert discount_weight(1.0, 0.0, 1.0) == pytest.approx(1.0 - math.exp(-1.0))
    assert step_count(1.0, 0.1) == 10
    assert step_count(1e-6, 0.1) == 1


def test_feedback_takes_the_exit_at_its_face(bundled):
    p, _ = bundled("decoupled_pursuit")
    sp = SchemeParams(dt=0.01, tol=1e-9)
    lower, _ = solve(p, build_grid(p, 21), sp)
    strategy = feedback_strategy(p, lower, Player.X, sp.dt)

    outcome = play(p, [0.8], [0.5], strategy, _constant(p, Player.Y, 1, dt=sp.dt), 3.0)
    assert outcome.exit_case in (ExitCase.X_ONLY, ExitCase.SIMULTANEOUS)
    assert outcome.tau_x < 0.5
    assert outcome.cost <= interpolate(lower, np.array([0.8, 0.5])) + 0.05

    # against every opponent signal of the family the feedback stays within the lower value
    value = interpolate(lower, np.array([0.8, 0.2]))
    family = probe_family(p, Player.Y, step_count(3.0, sp.dt), sp.dt, 8, np.random.default_rng(5))
    worst = max(play(p, [0.8], [0.2], strategy, signal, 3.0).cost for signal in family)
    assert worst <= value + 0.05


def test_never_exiting_cost_grows_with_the_horizon_within_the_tail(bundled):
    p, _ = bundled("decoupled_pursuit")
    alpha, beta = _constant(p, Player.X, 1, steps=400), _constant(p, Player.Y, 1, steps=400)
    outcomes = [integrate(p, [0.4], [0.7], alpha, beta, horizon) for horizon in (0.5, 1.0, 2.0, 4.0)]
    assert all(o.exit_case == ExitCase.NEVER for o in outcomes)
    for shorter, longer in zip(outcomes, outcomes[1:]):
        assert longer.cost >= shorter.cost
        assert longer.cost - shorter.cost <= shorter.tail_bound + 1e-12


def test_euler_playthrough_error_shrinks_with_the_step(bundled):
    p, _ = bundled("decoupled_pursuit")
    # x(t) = 0.3 + t exits at t = 0.7 with running cost x + 0.5 + 0.5 a^2
    exit_time = 0.7
    exact = 1.3 * -math.expm1(-exit_time) + 1.0 - math.exp(-exit_time) * (1.0 + exit_time) + math.exp(-exit_time)
    errors = []
    for dt in (0.02, 0.01, 0.005):
        steps = step_count(1.0, dt)
        outcome = integrate(
            p, [0.3], [0.5], _constant(p, Player.X, 2, steps, dt), _constant(p, Player.Y, 1, steps, dt), 1.0
        )
        assert outcome.exit_case == ExitCase.X_ONLY
        errors.append(abs(outcome.cost - exact))
        assert errors[-1] <= dt
    assert errors[2] < errors[1] < errors[0]


def test_dpp_residual_vanishes_without_costs():
    p = make_game(costs={"running": constant(0.0)})
    sp = SchemeParams(dt=0.05, tol=1e-10)
    solved, _ = solve(p, build_grid(p, 11), sp)
    assert dpp_residual(p, solved, [0.5, 0.5], sp.dt, 2, sp.dt) == pytest.approx(0.0, abs=1e-12)


def test_dpp_residual_of_a_zero_grid_is_the_step_cost(bundled):
    p, _ = bundled("eikonal_1d")
    dt = 0.005
    zero = build_grid(p, [11, 3])
    # running cost 1 over one step, zero value at its end
    assert dpp_residual(p, zero, [0.5, 0.0], dt, 2, dt) == pytest.approx(-math.expm1(-dt), abs=1e-12)
