"""
Semi-Lagrangian value iteration for the lower and upper values.

One sweep applies, at every node z,

    S(z) = opt_b opt_a { dt * l(z, a, b) + exp(-lambda dt) * I[v](foot(z, a, b)) }

(LOWER: max over b of min over a, UPPER: min over a of max over b) followed by the
boundary operator of the node role: min with psi_X on X faces, max with psi_Y on Y
faces and a clamp between the two at corners. Feet are clamped to the closed boxes.
"""
import logging
from typing import NamedTuple, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import ConvergenceError, SchemeError
from app.models.enums import Convention, NodeRole
from app.models.game import GameProblem
from app.models.grid import ValueGrid
from app.schemas.reports import SolveReport
from app.schemas.scheme import SchemeParams
from app.services.grid import interpolate, interpolation_weights

logger = logging.getLogger(__name__)


class SolveBothResult(NamedTuple):
    lower: ValueGrid
    upper: ValueGrid
    gap: float
    lower_report: SolveReport
    upper_report: SolveReport


def check_scheme(p: GameProblem, g: ValueGrid, sp: SchemeParams):
    if sp.dt * p.costs.discount_lambda >= 1.0:
        raise SchemeError(
            f"dt*lambda = {sp.dt * p.costs.discount_lambda:.6g} must be below 1"
        )
    cell = float(np.min(g.spacing))
    if sp.dt * p.dynamics.bound_m > cell * (1.0 + 1e-9):
        raise SchemeError(
            f"dt*M = {sp.dt * p.dynamics.bound_m:.6g} exceeds the grid spacing {cell:.6g}; "
            f"reduce dt or coarsen the grid"
        )


def feet(p: GameProblem, z: np.ndarray, a: np.ndarray, b: np.ndarray, dt: float) -> np.ndarray:
    """Euler feet from states z under the control pair, each part clamped to its box"""
    x, y = p.split_state(z)
    fx = p.omega_x.clamp(x + dt * p.dynamics.velocity_x(x, a, b))
    fy = p.omega_y.clamp(y + dt * p.dynamics.velocity_y(y, b))
    return np.concatenate([fx, fy], axis=-1)


def one_step_table(p: GameProblem, g: ValueGrid, dt: float, z: np.ndarray) -> np.ndarray:
    """
    dt * l + exp(-lambda dt) * I[v](foot) for every state and control pair.

    Shape (N, |A|, |B|); states need not be grid nodes.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    rho = np.exp(-p.costs.discount_lambda * dt)
    table = np.empty((z.shape[0], len(p.controls_a), len(p.controls_b)))
    for i, a in enumerate(p.controls_a.array):
        for j, b in enumerate(p.controls_b.array):
            foot_values = np.atleast_1d(interpolate(g, feet(p, z, a, b, dt)))
            table[:, i, j] = dt * p.running_cost(z, a, b) + rho * foot_values
    return table


def optimize(table: np.ndarray, convention: Convention) -> np.ndarray:
    """Reduce (..., |A|, |B|) tables to values; X minimises, Y maximises"""
    if convention == Convention.LOWER:
        return table.min(axis=-2).max(axis=-1)
    return table.max(axis=-1).min(axis=-1)


def apply_boundary(roles: np.ndarray, s: np.ndarray, psi_x: np.ndarray, psi_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Boundary operator by node role; also returns the corners with psi_Y > psi_X"""
    out = np.array(s, dtype=float, copy=True)
    x_face = roles == NodeRole.X_FACE.value
    y_face = roles == NodeRole.Y_FACE.value
    corner = roles == NodeRole.CORNER.value
    out[x_face] = np.minimum(psi_x[x_face], s[x_face])
    out[y_face] = np.maximum(psi_y[y_face], s[y_face])
    low = np.minimum(psi_y[corner], psi_x[corner])
    high = np.maximum(psi_y[corner], psi_x[corner])
    out[corner] = np.clip(s[corner], low, high)
    flagged = corner & (psi_y > psi_x)
    return out, flagged


def exit_costs_at(p: GameProblem, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x, y = p.split_state(z)
    return (
        np.asarray(p.costs.exit_x(x, y), dtype=float),
        np.asarray(p.costs.exit_y(x, y), dtype=float),
    )


def bellman_update(p: GameProblem, g: ValueGrid, sp: SchemeParams, node) -> float:
    """One-step DPP value at a single node (flat index or multi-index)"""
    index = node if isinstance(node, (int, np.integer)) else g.node_index(node)
    z = g.coordinates()[index][None, :]
    s = optimize(one_step_table(p, g, sp.dt, z), sp.convention)
    psi_x, psi_y = exit_costs_at(p, z)
    value, _ = apply_boundary(g.flat_roles[index: index + 1], s, psi_x, psi_y)
    return float(value[0])


class SemiLagrangianOperator:
    """
    Vectorised sweep: one sparse interpolation matrix and one stage-cost vector per
    control pair, assembled once and reused by every sweep.
    """

    def __init__(self, p: GameProblem, g: ValueGrid, sp: SchemeParams):
        self.problem = p
        self.grid = g
        self.params = sp
        self.discount = float(np.exp(-p.costs.discount_lambda * sp.dt))

        z = g.coordinates()
        self.roles = g.flat_roles
        self.psi_x, self.psi_y = exit_costs_at(p, z)
        self.stage = np.empty((len(p.controls_a), len(p.controls_b), g.size))
        self.weights = []
        for i, a in enumerate(p.controls_a.array):
            row = []
            for j, b in enumerate(p.controls_b.array):
                self.stage[i, j] = sp.dt * p.running_cost(z, a, b)
                row.append(interpolation_weights(g, feet(p, z, a, b, sp.dt)))
            self.weights.append(row)
        _, self.flagged = apply_boundary(self.roles, np.zeros(g.size), self.psi_x, self.psi_y)

    def table(self, values: np.ndarray) -> np.ndarray:
        """(size, |A|, |B|) one-step values at every node"""
        out = np.empty((self.grid.size,) + self.stage.shape[:2])
        for i, row in enumerate(self.weights):
            for j, w in enumerate(row):
                out[:, i, j] = self.stage[i, j] + self.discount * (w @ values)
        return out

    def apply(self, values: np.ndarray) -> np.ndarray:
        s = optimize(self.table(values), self.params.convention)
        out, _ = apply_boundary(self.roles, s, self.psi_x, self.psi_y)
        return out


def boundary_violations(g: ValueGrid, psi_x: np.ndarray, psi_y: np.ndarray, flagged: np.ndarray, tol: float) -> int:
    """Nodes breaking V <= psi_X on X faces/corners or V >= psi_Y on Y faces/corners"""
    v = g.flat_values
    roles = g.flat_roles
    on_x = (roles == NodeRole.X_FACE.value) | (roles == NodeRole.CORNER.value)
    on_y = (roles == NodeRole.Y_FACE.value) | (roles == NodeRole.CORNER.value)
    bad = (on_x & (v > psi_x + tol)) | (on_y & (v < psi_y - tol))
    return int(np.sum(bad & ~flagged))


def solve(p: GameProblem, g: ValueGrid, sp: SchemeParams) -> Tuple[ValueGrid, SolveReport]:
    """Jacobi value iteration from the values stored in g"""
    check_scheme(p, g, sp)
    operator = SemiLagrangianOperator(p, g, sp)
    values = g.flat_values.copy()

    residual = np.inf
    previous = None
    contraction = 0.0
    iterations = 0
    for iterations in range(1, sp.max_iters + 1):
        updated = operator.apply(values)
        residual = float(np.max(np.abs(updated - values)))
        scale = max(1.0, float(np.max(np.abs(updated))))
        if previous is not None and previous > settings.CONTRACTION_FLOOR * scale:
            contraction = max(contraction, residual / previous)
        previous = residual
        values = updated
        if residual <= sp.tol:
            break

    solved = g.with_values(values)
    report = SolveReport(
        convention=sp.convention,
        iterations=iterations,
        final_residual=residual,
        contraction_estimate=contraction,
        discount_factor=operator.discount,
        boundary_violations=boundary_violations(solved, operator.psi_x, operator.psi_y, operator.flagged, sp.tol),
        flagged_corners=int(np.sum(operator.flagged)),
        converged=residual <= sp.tol,
    )
    if not report.converged:
        logger.error(f"{p.name}: {sp.convention.value} iteration did not converge in {iterations} sweeps")
        raise ConvergenceError(
            f"{sp.convention.value} value iteration did not converge", residual, iterations, report
        )

    if report.flagged_corners:
        logger.warning(f"{p.name}: {report.flagged_corners} corner nodes have psi_Y > psi_X")
    logger.info(
        f"{p.name}: {sp.convention.value} converged in {iterations} sweeps "
        f"(residual {residual:.3e}, contraction {contraction:.6f})"
    )
    return solved, report


def solve_both(p: GameProblem, g: ValueGrid, sp: SchemeParams) -> SolveBothResult:
    lower, lower_report = solve(p, g, sp.model_copy(update={"convention": Convention.LOWER}))
    upper, upper_report = solve(p, g, sp.model_copy(update={"convention": Convention.UPPER}))
    gap = float(np.max(np.abs(upper.flat_values - lower.flat_values)))
    logger.info(f"{p.name}: sup |upper - lower| = {gap:.3e}")
    return SolveBothResult(lower, upper, gap, lower_report, upper_report)
