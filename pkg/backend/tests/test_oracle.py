import numpy as np
import pytest

from app.core.exceptions import NotExactifiableError, ProblemDefinitionError
from app.models.enums import Convention, NodeRole
from app.schemas.scheme import SchemeParams
from app.services.grid import build_grid
from app.services.oracle import DiscreteGame, brute_value, exactify
from app.services.solver import solve
from conftest import constant, make_game, poly

PENNIES = poly((0.5, {}), (0.5, {"a0": 1, "b0": 1}))

# feet land on nodes: unit speeds, dt equal to the spacing
INSTANCES = {
    "node_stepping": dict(
        grid=3, dt=0.5,
        costs={"running": PENNIES, "exitX": constant(1.0), "exitY": constant(0.5), "exitXY": constant(0.75)},
    ),
    "wide_box": dict(
        grid=[5, 5], dt=0.5,
        omegaX={"lo": [0.0], "hi": [2.0]},
        omegaY={"lo": [0.0], "hi": [2.0]},
        costs={"running": poly((1.0, {"x0": 1}), (0.5, {"b0": 2})), "exitX": constant(0.2), "exitY": constant(0.1)},
    ),
    "slow_discount": dict(
        grid=[5, 3], dt=0.25,
        omegaY={"lo": [0.0], "hi": [0.5]},
        costs={"discount": 0.5, "running": PENNIES, "exitX": constant(2.0), "exitY": constant(0.0)},
    ),
    "corner_jump": dict(
        grid=3, dt=0.5,
        costs={"exitX": constant(0.0), "exitY": constant(1.0), "exitXY": constant(0.5)},
    ),
    "no_opponent_state": dict(
        grid=[6], dt=0.2,
        omegaY={"lo": [], "hi": []},
        controls={"B": [[-1.0], [1.0]]},
        dynamics={"kind": "linear", "params": {"ga": [[1.0]]}},
        costs={"running": poly((1.0, {}), (0.5, {"a0": 1, "b0": 1})), "exitX": constant(0.3)},
    ),
    "two_controls": dict(
        grid=[3, 3], dt=0.5,
        controls={"A": [[-1.0], [1.0]], "B": [[0.0], [1.0]]},
        costs={"running": poly((1.0, {"y0": 2}), (1.0, {"a0": 1, "b0": 1}), (1.0, {})), "exitX": constant(0.4), "exitY": constant(0.4), "exitXY": constant(0.4)},
    ),
}


def _instance(name):
    sections = dict(INSTANCES[name])
    grid = sections.pop("grid")
    dt = sections.pop("dt")
    sections.setdefault("dynamics", {})
    sections["dynamics"] = {"bound": 1.0, **sections["dynamics"]}
    problem = make_game(**sections)
    return problem, build_grid(problem, grid), dt


@pytest.mark.parametrize("name", sorted(INSTANCES))
@pytest.mark.parametrize("convention", [Convention.LOWER, Convention.UPPER])
def test_solver_matches_brute_force(name, convention):
    problem, grid, dt = _instance(name)
    sp = SchemeParams(dt=dt, tol=1e-13, convention=convention)
    game = exactify(problem, grid, sp)
    assert len(game.states) <= 50
    assert game.actions_a <= 3 and game.actions_b <= 3

    solved, _ = solve(problem, grid, sp)
    brute = brute_value(game, convention)
    difference = max(abs(solved.flat_values[s] - value) for s, value in brute.items())
    assert difference <= 1e-9


@pytest.mark.parametrize("convention", [Convention.LOWER, Convention.UPPER])
def test_brute_value_ignores_state_labels(convention):
    problem, grid, dt = _instance("wide_box")
    game = exactify(problem, grid, SchemeParams(dt=dt, convention=convention))
    rng = np.random.default_rng(6)
    label = {s: 100 + int(k) for s, k in zip(game.states, rng.permutation(len(game.states)))}
    relabeled = DiscreteGame(
        states=[label[s] for s in reversed(game.states)],
        actions_a=game.actions_a,
        actions_b=game.actions_b,
        transitions={(label[s], i, j): label[t] for (s, i, j), t in game.transitions.items()},
        stage_cost={(label[s], i, j): cost for (s, i, j), cost in game.stage_cost.items()},
        discount=game.discount,
        terminal={(label[s], side): cost for (s, side), cost in game.terminal.items()},
        roles={label[s]: role for s, role in game.roles.items()},
    )

    original = brute_value(game, convention)
    renamed = brute_value(relabeled, convention)
    assert sorted(renamed) == sorted(label.values())
    for s, value in original.items():
        assert renamed[label[s]] == pytest.approx(value, abs=1e-12)


def test_exactify_rejects_off_node_feet(bundled):
    problem, spec = bundled("decoupled_pursuit")
    with pytest.raises(NotExactifiableError):
        exactify(problem, build_grid(problem, spec.scheme.grid), SchemeParams(dt=spec.scheme.dt))


def test_exactified_tables(bundled):
    problem, _ = bundled("node_stepping")
    game = exactify(problem, build_grid(problem, 3), SchemeParams(dt=0.5))
    assert game.discount == pytest.approx(np.exp(-0.5))
    # centre node (index 4) moves to the upper corner under a = b = +1
    assert game.transitions[(4, 2, 2)] == 8
    assert game.roles[8] == NodeRole.CORNER
    assert game.stage_cost[(4, 2, 2)] == pytest.approx(0.5 * (0.5 + 0.5))
    assert game.terminal[(8, "X")] == 1.0 and game.terminal[(8, "Y")] == 0.5


def _matrix_game(stage):
    # state 0 pays the matrix and moves to the absorbing free state 1
    transitions, costs = {}, {}
    for i in range(2):
        for j in range(2):
            transitions[(0, i, j)] = 1
            costs[(0, i, j)] = stage[i][j]
            transitions[(1, i, j)] = 1
            costs[(1, i, j)] = 0.0
    return DiscreteGame(
        states=[0, 1], actions_a=2, actions_b=2,
        transitions=transitions, stage_cost=costs, discount=0.5,
    )


def test_brute_value_orders_the_optimisation():
    game = _matrix_game([[1.0, 0.0], [0.0, 1.0]])
    assert brute_value(game, Convention.LOWER)[0] == 0.0
    assert brute_value(game, Convention.UPPER)[0] == 1.0


def test_brute_value_geometric_sum():
    game = DiscreteGame(
        states=[0], actions_a=1, actions_b=1,
        transitions={(0, 0, 0): 0}, stage_cost={(0, 0, 0): 1.0}, discount=0.5,
    )
    assert brute_value(game, Convention.LOWER)[0] == pytest.approx(2.0, abs=1e-12)
    assert brute_value(game, Convention.LOWER, horizon=2)[0] == 1.5


def test_discrete_game_must_be_total():
    with pytest.raises(ProblemDefinitionError):
        DiscreteGame(
            states=[0], actions_a=2, actions_b=1,
            transitions={(0, 0, 0): 0}, stage_cost={(0, 0, 0): 1.0}, discount=0.5,
        )
