"""
Validation of a game instance: exit-cost compatibility on the corner set, boundary
controllability, declared bounds and the structure of the running cost.

Every check samples deterministically (uniform tensor samples of faces or boxes), so
the reports are reproducible.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ControllabilityError, ProblemDefinitionError
from app.models.enums import CostSplit, Player, ReportStatus
from app.models.game import Box, GameProblem
from app.schemas.reports import (
    BoundsReport,
    ControllabilityReport,
    CornerViolation,
    CostSplitReport,
    FaceCheck,
    ValidationReport,
)

logger = logging.getLogger(__name__)


def box_samples(box: Box, per_axis: int) -> np.ndarray:
    """Uniform tensor samples of the closed box; a single empty point for a 0-dim box"""
    if box.dim == 0:
        return np.zeros((1, 0))
    lines = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lo, box.hi)]
    mesh = np.meshgrid(*lines, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def _pairs(xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.repeat(xs, len(ys), axis=0), np.tile(ys, (len(xs), 1))


def _evaluate(fn, label: str, size: int, *args) -> np.ndarray:
    value = np.asarray(fn(*args), dtype=float)
    if value.shape != (size,):
        raise ProblemDefinitionError(f"{label} returned shape {value.shape}, expected ({size},)")
    return value


def validate_exit_costs(p: GameProblem, corner_samples: int) -> ValidationReport:
    """Sample the corner set and report every point violating psi_Y <= psi_XY <= psi_X"""
    if corner_samples < 1:
        raise ProblemDefinitionError("corner_samples must be a positive integer")
    if p.m == 0:
        return ValidationReport(status=ReportStatus.PASS, samples=0)

    xs = p.omega_x.boundary_samples(corner_samples)
    ys = p.omega_y.boundary_samples(corner_samples)
    x, y = _pairs(xs, ys)
    size = x.shape[0]
    psi_x = _evaluate(p.costs.exit_x, "exitX cost", size, x, y)
    psi_y = _evaluate(p.costs.exit_y, "exitY cost", size, x, y)
    psi_xy = _evaluate(p.costs.exit_xy, "exitXY cost", size, x, y)

    scale = 1.0 + max(np.max(np.abs(psi_x)), np.max(np.abs(psi_y)), np.max(np.abs(psi_xy)))
    tol = 1e-12 * scale
    bad = (psi_y > psi_xy + tol) | (psi_xy > psi_x + tol)
    violations = [
        CornerViolation(
            x=x[i].tolist(), y=y[i].tolist(),
            psi_y=float(psi_y[i]), psi_xy=float(psi_xy[i]), psi_x=float(psi_x[i]),
        )
        for i in np.flatnonzero(bad)
    ]
    status = ReportStatus.WARN if violations else ReportStatus.PASS
    if violations:
        logger.warning(
            f"{p.name}: exit costs violate psi_Y <= psi_XY <= psi_X at {len(violations)} of "
            f"{size} corner samples; continuity of the value is not guaranteed"
        )
    return ValidationReport(status=status, samples=size, violations=violations)


def _inward_speeds(p: GameProblem, player: Player, points: np.ndarray, inward: np.ndarray):
    """
    Inward normal speeds for every own control (rows) and opponent control (columns),
    plus the speeds without the coupling term. Shapes (P, own, opp) and (P, own).
    """
    own = p.controls(player).array
    if player == Player.X:
        opp = p.controls_b.array
        speeds = np.stack(
            [
                np.stack([p.dynamics.velocity_x(points, a, b) @ inward for b in opp], axis=-1)
                for a in own
            ],
            axis=1,
        )
        free = np.stack([np.asarray(p.dynamics.drift_x(points, a)) @ inward for a in own], axis=1)
    else:
        speeds = np.stack([p.dynamics.velocity_y(points, b) @ inward for b in own], axis=1)[:, :, None]
        free = speeds[:, :, 0]
    return speeds, free


def _coupling_bound(p: GameProblem, player: Player, inward: np.ndarray) -> float:
    if player == Player.Y or p.dynamics.coupling_d is None:
        return 0.0
    return float(np.max(np.abs(p.controls_b.array @ p.dynamics.coupling_d.T @ inward)))


def validate_controllability(p: GameProblem, boundary_samples: int) -> ControllabilityReport:
    """
    For sampled boundary points search a control entering the domain and one leaving it.

    Under coupling the inward control must enter for every opponent control; the reported
    zeta is its inward speed without the coupling term, c_tilde bounds |D b . xi|.
    """
    if boundary_samples < 1:
        raise ProblemDefinitionError("boundary_samples must be a positive integer")

    entries: List[FaceCheck] = []
    for player in (Player.X, Player.Y):
        box = p.box(player)
        for axis, side in box.faces():
            points = box.face_samples(axis, side, boundary_samples)
            inward = -box.outward_normal(axis, side)
            speeds, free = _inward_speeds(p, player, points, inward)
            c_tilde = _coupling_bound(p, player, inward)
            worst = speeds.min(axis=2)
            best = speeds.max(axis=2)
            for k, point in enumerate(points):
                inward_index = int(np.argmax(worst[k])) if worst[k].max() > 0 else None
                leaving = np.flatnonzero(best[k] < 0)
                outward_index = int(leaving[0]) if leaving.size else None
                zeta = float(free[k, inward_index]) if inward_index is not None else float(free[k].max())
                entries.append(
                    FaceCheck(
                        player=player,
                        axis=axis,
                        side=side,
                        point=point.tolist(),
                        inward_index=inward_index,
                        outward_index=outward_index,
                        inward_speed=float(worst[k].max()),
                        zeta=zeta,
                        c_tilde=c_tilde,
                        ok=inward_index is not None and outward_index is not None,
                    )
                )

    failures = sum(1 for e in entries if not e.ok)
    passing = [e.zeta for e in entries if e.ok]
    report = ControllabilityReport(
        status=ReportStatus.FAIL if failures else ReportStatus.PASS,
        failures=failures,
        min_zeta=min(passing) if passing else 0.0,
        c_tilde=max((e.c_tilde for e in entries), default=0.0),
        entries=entries,
    )
    if failures:
        logger.warning(f"{p.name}: boundary controllability fails at {failures} sampled points")
    return report


def inward_control(
    p: GameProblem,
    player: Player,
    point: np.ndarray,
    faces: Optional[Sequence[Tuple[int, int]]] = None,
) -> int:
    """
    Index of the control with the largest worst-case inward speed at a boundary point.

    All faces the point lies on must be entered; a point off the boundary uses its
    nearest face.
    """
    box = p.box(player)
    point = box.clamp(np.asarray(point, dtype=float).reshape(-1))
    if faces is None:
        faces = box.active_faces(point)
    if not faces:
        gaps = [
            (point[axis] - box.lo[axis]) if side < 0 else (box.hi[axis] - point[axis])
            for axis, side in box.faces()
        ]
        faces = [box.faces()[int(np.argmin(gaps))]]

    worst = None
    for axis, side in faces:
        speeds, _ = _inward_speeds(p, player, point[None, :], -box.outward_normal(axis, side))
        face_worst = speeds[0].min(axis=1)
        worst = face_worst if worst is None else np.minimum(worst, face_worst)
    if worst.max() <= 0:
        raise ControllabilityError(
            f"no control of player {player.value} enters the domain at {point.tolist()} "
            f"(faces {list(faces)}): boundary controllability fails"
        )
    return int(np.argmax(worst))


def validate_bounds(p: GameProblem, samples: int) -> BoundsReport:
    """Spot-check the declared M and L against sampled drifts and costs"""
    xs = box_samples(p.omega_x, samples)
    ys = box_samples(p.omega_y, samples)
    notes: List[str] = []

    drift_max = 0.0
    lipschitz = 0.0
    for a in p.controls_a.array:
        for b in p.controls_b.array:
            vx = p.dynamics.velocity_x(xs, a, b)
            drift_max = max(drift_max, float(np.max(np.linalg.norm(vx, axis=-1))))
            lipschitz = max(lipschitz, _lipschitz_estimate(p.omega_x, xs, vx, samples))
    for b in p.controls_b.array:
        vy = p.dynamics.velocity_y(ys, b)
        if p.m:
            drift_max = max(drift_max, float(np.max(np.linalg.norm(vy, axis=-1))))
            lipschitz = max(lipschitz, _lipschitz_estimate(p.omega_y, ys, vy, samples))

    x, y = _pairs(xs, ys)
    costs = [
        np.asarray(p.costs.running(x, y, a, b), dtype=float)
        for a in p.controls_a.array
        for b in p.controls_b.array
    ]
    costs += [np.asarray(fn(x, y), dtype=float) for fn in (p.costs.exit_x, p.costs.exit_y, p.costs.exit_xy)]
    stacked = np.concatenate(costs)
    if not np.all(np.isfinite(stacked)):
        raise ProblemDefinitionError(f"{p.name}: cost evaluations are not finite")
    cost_max = float(np.max(np.abs(stacked)))
    negatives = int(np.sum(stacked < 0))

    m_bound = p.dynamics.bound_m
    status = ReportStatus.PASS
    if drift_max > m_bound * (1 + 1e-9):
        status = ReportStatus.FAIL
        notes.append(f"sampled drift {drift_max:.6g} exceeds declared M={m_bound:.6g}")
    if lipschitz > p.dynamics.lipschitz_l * (1 + 1e-6) + 1e-9:
        status = ReportStatus.FAIL
        notes.append(f"finite-difference Lipschitz estimate {lipschitz:.6g} exceeds declared L")
    if cost_max > m_bound * (1 + 1e-9):
        status = ReportStatus.WARN if status == ReportStatus.PASS else status
        notes.append(f"sampled |cost| {cost_max:.6g} exceeds declared M={m_bound:.6g}")
    if negatives:
        status = ReportStatus.WARN if status == ReportStatus.PASS else status
        notes.append(f"{negatives} sampled cost values are negative")

    return BoundsReport(
        status=status,
        declared_m=m_bound,
        declared_l=p.dynamics.lipschitz_l,
        sampled_drift_max=drift_max,
        sampled_cost_max=cost_max,
        negative_cost_samples=negatives,
        lipschitz_estimate=lipschitz,
        notes=notes,
    )


def _lipschitz_estimate(box: Box, points: np.ndarray, values: np.ndarray, per_axis: int) -> float:
    if per_axis < 2 or box.dim == 0:
        return 0.0
    shape = (per_axis,) * box.dim
    grid_points = points.reshape(shape + (box.dim,))
    grid_values = values.reshape(shape + (values.shape[-1],))
    estimate = 0.0
    for axis in range(box.dim):
        dz = np.diff(grid_points, axis=axis)
        dv = np.diff(grid_values, axis=axis)
        ratio = np.linalg.norm(dv, axis=-1) / np.linalg.norm(dz, axis=-1)
        estimate = max(estimate, float(np.max(ratio)))
    return estimate


def detect_cost_split(p: GameProblem, samples: int = 3) -> CostSplit:
    """
    Decide how the running cost separates, from mixed differences over the control sets.

    PLAYER: l(z,a,b) - l(z,a,b0) - l(z,a0,b) + l(z,a0,b0) vanishes.
    STATE_CONTROL: additionally l(z,a,b) - l(z,a0,b0) does not depend on z.
    """
    xs = box_samples(p.omega_x, samples)
    ys = box_samples(p.omega_y, samples)
    x, y = _pairs(xs, ys)
    table = np.stack(
        [
            np.stack([np.asarray(p.costs.running(x, y, a, b), dtype=float) for b in p.controls_b.array], axis=-1)
            for a in p.controls_a.array
        ],
        axis=1,
    )
    tol = 1e-9 * (1.0 + float(np.max(np.abs(table))))
    mixed = table - table[:, :, :1] - table[:, :1, :] + table[:, :1, :1]
    if np.max(np.abs(mixed)) > tol:
        return CostSplit.NONE
    control_part = table - table[:, :1, :1]
    if np.max(np.abs(control_part - control_part[:1])) > tol:
        return CostSplit.PLAYER
    return CostSplit.STATE_CONTROL


def validate_cost_split(p: GameProblem) -> CostSplitReport:
    detected = detect_cost_split(p)
    declared = p.costs.split
    compatible = {
        CostSplit.NONE: {CostSplit.NONE, CostSplit.PLAYER, CostSplit.STATE_CONTROL},
        CostSplit.PLAYER: {CostSplit.PLAYER, CostSplit.STATE_CONTROL},
        CostSplit.STATE_CONTROL: {CostSplit.STATE_CONTROL},
    }[declared]
    status = ReportStatus.PASS if detected in compatible else ReportStatus.FAIL
    if status == ReportStatus.FAIL:
        logger.warning(f"{p.name}: declared cost split {declared.value} but sampled {detected.value}")
    return CostSplitReport(status=status, declared=declared.value, detected=detected.value)
