"""
Runtime models for an exit-time game: domains, control sets, dynamics and costs.

All callables are vectorised over states: states are arrays of shape (N, dim) and a
single control point is a 1-D array. Drifts return (N, dim) velocities, costs (N,).
"""
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import ProblemDefinitionError
from app.models.enums import CostSplit, Player

DriftFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
PairCostFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
RunningCostFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

BOUNDARY_TOL = 1e-12


class Box(BaseModel):
    """Axis-aligned box; the open set is the domain, faces are its boundary"""
    model_config = ConfigDict(frozen=True)

    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_bounds(self):
        if len(self.lo) != len(self.hi):
            raise ProblemDefinitionError(
                f"box bounds have different lengths: {len(self.lo)} vs {len(self.hi)}"
            )
        for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            if not lo < hi:
                raise ProblemDefinitionError(f"box axis {i}: lo={lo} must be < hi={hi}")
        return self

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_array + self.hi_array)

    def exterior_distance(self, z: np.ndarray) -> np.ndarray:
        """Largest coordinate violation; <= 0 inside the closed box, -inf for a 0-dim box"""
        z = np.asarray(z, dtype=float)
        if self.dim == 0:
            return np.full(z.shape[:-1], -np.inf)
        return np.max(np.maximum(self.lo_array - z, z - self.hi_array), axis=-1)

    def contains(self, z: np.ndarray, tol: float = BOUNDARY_TOL):
        return self.exterior_distance(z) <= tol

    def clamp(self, z: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return np.asarray(z, dtype=float)
        return np.clip(z, self.lo_array, self.hi_array)

    def on_boundary(self, z: np.ndarray, tol: float = BOUNDARY_TOL):
        z = np.asarray(z, dtype=float)
        if self.dim == 0:
            return np.zeros(z.shape[:-1], dtype=bool)
        near = (np.abs(z - self.lo_array) <= tol) | (np.abs(z - self.hi_array) <= tol)
        return self.contains(z, tol) & np.any(near, axis=-1)

    def faces(self) -> List[Tuple[int, int]]:
        """(axis, side) pairs; side -1 is the lo face, +1 the hi face"""
        return [(axis, side) for axis in range(self.dim) for side in (-1, 1)]

    def outward_normal(self, axis: int, side: int) -> np.ndarray:
        normal = np.zeros(self.dim)
        normal[axis] = float(side)
        return normal

    def active_faces(self, z: np.ndarray, tol: float = 1e-9) -> List[Tuple[int, int]]:
        """Faces a single point lies on (or beyond)"""
        z = np.asarray(z, dtype=float).reshape(-1)
        active = []
        for axis, side in self.faces():
            if side < 0 and z[axis] <= self.lo[axis] + tol:
                active.append((axis, side))
            elif side > 0 and z[axis] >= self.hi[axis] - tol:
                active.append((axis, side))
        return active

    def face_samples(self, axis: int, side: int, per_axis: int) -> np.ndarray:
        """Uniform tensor samples of one face, the fixed coordinate set to lo or hi"""
        lines = []
        for i in range(self.dim):
            if i == axis:
                lines.append(np.array([self.lo[i] if side < 0 else self.hi[i]]))
            else:
                lines.append(np.linspace(self.lo[i], self.hi[i], per_axis))
        mesh = np.meshgrid(*lines, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def boundary_samples(self, per_axis: int) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, 0))
        stacked = np.concatenate(
            [self.face_samples(axis, side, per_axis) for axis, side in self.faces()]
        )
        # faces share edges; keep first occurrence in face order
        _, first = np.unique(np.round(stacked, 12), axis=0, return_index=True)
        return stacked[np.sort(first)]


class ControlSet(BaseModel):
    """Finite sample of a compact control set; listing order breaks ties"""
    model_config = ConfigDict(frozen=True)

    points: Tuple[Tuple[float, ...], ...]

    @field_validator("points")
    @classmethod
    def _check_points(cls, points):
        if len(points) == 0:
            raise ProblemDefinitionError("control set must not be empty")
        dims = {len(p) for p in points}
        if len(dims) != 1:
            raise ProblemDefinitionError(f"control points have mixed dimensions {sorted(dims)}")
        if len(set(points)) != len(points):
            raise ProblemDefinitionError("control set contains duplicate points")
        return points

    @property
    def dim(self) -> int:
        return len(self.points[0])

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(len(self.points), self.dim)

    def __len__(self) -> int:
        return len(self.points)

    def index_of(self, point, tol: float = 1e-12) -> int:
        dist = np.max(np.abs(self.array - np.asarray(point, dtype=float)), axis=-1) if self.dim else np.zeros(len(self))
        hits = np.flatnonzero(dist <= tol)
        if hits.size == 0:
            raise ProblemDefinitionError(f"point {tuple(point)} is not in the control set")
        return int(hits[0])


class Dynamics(BaseModel):
    """
    x' = drift_x(x, a) + D b and y' = drift_y(y, b).

    With D present drift_x is the control-affine part f(x) + G a, so the X velocity is
    affine in both controls; without D the players are fully decoupled.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    drift_x: DriftFn
    drift_y: DriftFn
    coupling_d: Optional[np.ndarray] = None
    lipschitz_l: float = Field(ge=0.0)
    bound_m: float = Field(gt=0.0)

    @field_validator("coupling_d", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        if value is None:
            return None
        matrix = np.atleast_2d(np.asarray(value, dtype=float))
        matrix.setflags(write=False)
        return matrix

    @property
    def coupled(self) -> bool:
        return self.coupling_d is not None

    def velocity_x(self, x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        velocity = np.asarray(self.drift_x(x, a), dtype=float)
        if self.coupling_d is not None:
            velocity = velocity + self.coupling_d @ np.asarray(b, dtype=float)
        return velocity

    def velocity_y(self, y: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(self.drift_y(y, b), dtype=float)


class Costs(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    running: RunningCostFn
    exit_x: PairCostFn
    exit_y: PairCostFn
    exit_xy: PairCostFn
    discount_lambda: float = Field(gt=0.0)
    split: CostSplit = CostSplit.NONE


class GameProblem(BaseModel):
    """The full game datum; immutable and safe to share between workers"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "game"
    omega_x: Box
    omega_y: Box
    dynamics: Dynamics
    controls_a: ControlSet
    controls_b: ControlSet
    costs: Costs

    @model_validator(mode="after")
    def _check_dimensions(self):
        n, m = self.omega_x.dim, self.omega_y.dim
        if n == 0:
            raise ProblemDefinitionError("omegaX must have at least one coordinate")
        x = self.omega_x.center[None, :]
        y = self.omega_y.center[None, :]
        a = self.controls_a.array[0]
        b = self.controls_b.array[0]
        d = self.dynamics.coupling_d
        if d is not None and d.shape != (n, self.controls_b.dim):
            raise ProblemDefinitionError(
                f"coupling matrix has shape {d.shape}, expected ({n}, {self.controls_b.dim})"
            )
        checks = [
            ("driftX", lambda: self.dynamics.velocity_x(x, a, b), (1, n)),
            ("driftY", lambda: self.dynamics.velocity_y(y, b), (1, m)),
            ("running cost", lambda: self.costs.running(x, y, a, b), (1,)),
            ("exitX cost", lambda: self.costs.exit_x(x, y), (1,)),
            ("exitY cost", lambda: self.costs.exit_y(x, y), (1,)),
            ("exitXY cost", lambda: self.costs.exit_xy(x, y), (1,)),
        ]
        for label, evaluate, expected in checks:
            try:
                value = np.asarray(evaluate(), dtype=float)
            except (ValueError, IndexError, KeyError, TypeError) as e:
                raise ProblemDefinitionError(f"{label} cannot be evaluated: {e}") from e
            if value.shape != expected:
                raise ProblemDefinitionError(
                    f"{label} returned shape {value.shape}, expected {expected}"
                )
        return self

    @property
    def n(self) -> int:
        return self.omega_x.dim

    @property
    def m(self) -> int:
        return self.omega_y.dim

    @property
    def dim(self) -> int:
        return self.n + self.m

    def box(self, player: Player) -> Box:
        return self.omega_x if player == Player.X else self.omega_y

    def controls(self, player: Player) -> ControlSet:
        return self.controls_a if player == Player.X else self.controls_b

    def split_state(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z[:, : self.n], z[:, self.n:]

    def velocity(self, z: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Joint velocity (x', y') at states z of shape (N, n+m)"""
        x, y = self.split_state(z)
        return np.concatenate(
            [self.dynamics.velocity_x(x, a, b), self.dynamics.velocity_y(y, b)], axis=-1
        )

    def running_cost(self, z: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        x, y = self.split_state(z)
        return np.asarray(self.costs.running(x, y, a, b), dtype=float)
