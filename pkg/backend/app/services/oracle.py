"""
Brute-force values of tiny games whose Euler feet land exactly on grid nodes.

The discrete game is an explicit finite table (states, transitions, stage costs and
exit payments); its value is computed by memoised recursion over a finite horizon with
its own optimisation loops, sharing no code with the solver.
"""
import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings
from app.core.exceptions import NotExactifiableError, ProblemDefinitionError
from app.models.enums import Convention, NodeRole
from app.models.game import GameProblem
from app.models.grid import ValueGrid
from app.schemas.scheme import SchemeParams

logger = logging.getLogger(__name__)


class DiscreteGame(BaseModel):
    model_config = ConfigDict(frozen=True)

    states: List[int]
    actions_a: int
    actions_b: int
    transitions: Dict[Tuple[int, int, int], int]
    stage_cost: Dict[Tuple[int, int, int], float]
    discount: float = Field(..., gt=0.0, lt=1.0)
    # (state, "X" | "Y") -> exit payment on boundary states
    terminal: Dict[Tuple[int, str], float] = Field(default_factory=dict)
    roles: Dict[int, NodeRole] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_total(self):
        known = set(self.states)
        for s in self.states:
            for i in range(self.actions_a):
                for j in range(self.actions_b):
                    if (s, i, j) not in self.transitions or (s, i, j) not in self.stage_cost:
                        raise ProblemDefinitionError(f"no transition for state {s} under controls ({i}, {j})")
                    if self.transitions[(s, i, j)] not in known:
                        raise ProblemDefinitionError(f"transition from {s} leaves the state set")
        return self


def exactify(p: GameProblem, g: ValueGrid, sp: SchemeParams) -> DiscreteGame:
    coords = g.coordinates()
    counts = np.array(g.nodes_per_axis)
    spacing = g.spacing
    lo = g.lo

    transitions, stage_cost, terminal, roles = {}, {}, {}, {}
    for s, z in enumerate(coords):
        x = z[: p.n][None, :]
        y = z[p.n:][None, :]
        role = NodeRole(int(g.flat_roles[s]))
        roles[s] = role
        if role in (NodeRole.X_FACE, NodeRole.CORNER):
            terminal[(s, "X")] = float(p.costs.exit_x(x, y)[0])
        if role in (NodeRole.Y_FACE, NodeRole.CORNER):
            terminal[(s, "Y")] = float(p.costs.exit_y(x, y)[0])
        for i, a in enumerate(p.controls_a.array):
            for j, b in enumerate(p.controls_b.array):
                fx = p.omega_x.clamp(x[0] + sp.dt * p.dynamics.velocity_x(x, a, b)[0])
                fy = p.omega_y.clamp(y[0] + sp.dt * p.dynamics.velocity_y(y, b)[0])
                foot = np.concatenate([fx, fy])
                steps = (foot - lo) / spacing
                nearest = np.clip(np.round(steps), 0, counts - 1)
                offset = float(np.max(np.abs(steps - nearest) * spacing)) if g.dim else 0.0
                if offset > settings.SNAP_TOLERANCE:
                    raise NotExactifiableError(
                        f"foot {foot.tolist()} from node {z.tolist()} under controls ({i}, {j}) "
                        f"is {offset:.3e} away from the nearest node"
                    )
                transitions[(s, i, j)] = g.node_index(nearest.astype(int))
                stage_cost[(s, i, j)] = sp.dt * float(p.running_cost(z[None, :], a, b)[0])

    game = DiscreteGame(
        states=list(range(len(coords))),
        actions_a=len(p.controls_a),
        actions_b=len(p.controls_b),
        transitions=transitions,
        stage_cost=stage_cost,
        discount=math.exp(-p.costs.discount_lambda * sp.dt),
        terminal=terminal,
        roles=roles,
    )
    logger.debug(f"Exactified {p.name}: {len(game.states)} states")
    return game


def _horizon(d: DiscreteGame) -> int:
    stage = max((abs(c) for c in d.stage_cost.values()), default=0.0)
    exits = max((abs(c) for c in d.terminal.values()), default=0.0)
    bound = max(stage / (1.0 - d.discount), exits) + 1.0
    return max(1, int(math.ceil(math.log(settings.ORACLE_TRUNCATION / bound) / math.log(d.discount))))


def brute_value(d: DiscreteGame, convention: Convention, horizon: Optional[int] = None) -> Dict[int, float]:
    """Values after `horizon` backward steps from zero; the default makes the truncation below 1e-12"""
    steps = horizon if horizon is not None else _horizon(d)

    @lru_cache(maxsize=None)
    def value(k: int, s: int) -> float:
        if k == 0:
            return 0.0
        if convention == Convention.LOWER:
            best = -math.inf
            for j in range(d.actions_b):
                worst = math.inf
                for i in range(d.actions_a):
                    candidate = d.stage_cost[(s, i, j)] + d.discount * value(k - 1, d.transitions[(s, i, j)])
                    if candidate < worst:
                        worst = candidate
                if worst > best:
                    best = worst
        else:
            best = math.inf
            for i in range(d.actions_a):
                worst = -math.inf
                for j in range(d.actions_b):
                    candidate = d.stage_cost[(s, i, j)] + d.discount * value(k - 1, d.transitions[(s, i, j)])
                    if candidate > worst:
                        worst = candidate
                if worst < best:
                    best = worst

        role = d.roles.get(s, NodeRole.INTERIOR)
        if role == NodeRole.X_FACE:
            return min(d.terminal[(s, "X")], best)
        if role == NodeRole.Y_FACE:
            return max(d.terminal[(s, "Y")], best)
        if role == NodeRole.CORNER:
            low = min(d.terminal[(s, "X")], d.terminal[(s, "Y")])
            high = max(d.terminal[(s, "X")], d.terminal[(s, "Y")])
            return min(max(best, low), high)
        return best

    # warm the cache level by level so the recursion never goes deep
    for k in range(steps + 1):
        for s in d.states:
            value(k, s)
    return {s: value(steps, s) for s in d.states}
