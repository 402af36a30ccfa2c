"""
Explicit Euler stepping with exit detection against the closed boxes.

A player exits when a step ends outside its closed box; the crossing instant is found
by linear interpolation within the step and the exit state is projected onto the box.
After its exit a player's state is frozen.
"""
import math

import numpy as np

from app.models.game import BOUNDARY_TOL, Box, GameProblem


def crossing_fraction(box: Box, start: np.ndarray, end: np.ndarray) -> float:
    """Fraction of the step start -> end at which the segment first leaves the closed box"""
    delta = end - start
    fractions = []
    for i in range(box.dim):
        if end[i] > box.hi[i] + BOUNDARY_TOL and delta[i] > 0:
            fractions.append((box.hi[i] - start[i]) / delta[i])
        elif end[i] < box.lo[i] - BOUNDARY_TOL and delta[i] < 0:
            fractions.append((box.lo[i] - start[i]) / delta[i])
    return float(np.clip(min(fractions, default=1.0), 0.0, 1.0))


def discount_weight(discount: float, t: float, span: float) -> float:
    """Integral of exp(-discount s) over [t, t + span]"""
    return math.exp(-discount * t) * -math.expm1(-discount * span) / discount


def step_count(horizon: float, dt: float) -> int:
    return max(1, int(math.ceil(horizon / dt - 1e-9)))


class Track:
    """One player's state and first exit time"""

    def __init__(self, box: Box, state: np.ndarray):
        self.box = box
        self.state = np.asarray(state, dtype=float).copy()
        self.tau = math.inf
        self.exit_state = None

    @property
    def exited(self) -> bool:
        return self.exit_state is not None

    def advance(self, velocity: np.ndarray, t: float, h: float):
        if self.exited or self.box.dim == 0:
            return
        target = self.state + h * velocity
        if self.box.exterior_distance(target) > BOUNDARY_TOL:
            s = crossing_fraction(self.box, self.state, target)
            self.tau = t + s * h
            self.state = self.box.clamp(self.state + s * (target - self.state))
            self.exit_state = self.state.copy()
        else:
            self.state = self.box.clamp(target)


class JointStepper:
    """Both players integrated together; velocities use the states at the step start"""

    def __init__(self, p: GameProblem, x0: np.ndarray, y0: np.ndarray):
        self.problem = p
        self.x = Track(p.omega_x, x0)
        self.y = Track(p.omega_y, y0)

    @property
    def tau(self) -> float:
        return min(self.x.tau, self.y.tau)

    @property
    def game_over(self) -> bool:
        return self.x.exited or self.y.exited

    @property
    def finished(self) -> bool:
        """Nothing left to integrate: every player that can exit has exited"""
        return self.x.exited and (self.y.exited or self.problem.m == 0)

    @property
    def joint_state(self) -> np.ndarray:
        return np.concatenate([self.x.state, self.y.state])

    def step(self, a: np.ndarray, b: np.ndarray, t: float, h: float):
        p = self.problem
        vx = p.dynamics.velocity_x(self.x.state[None, :], a, b)[0]
        vy = p.dynamics.velocity_y(self.y.state[None, :], b)[0]
        self.x.advance(vx, t, h)
        self.y.advance(vy, t, h)


def state_at(times: np.ndarray, path: np.ndarray, t: float) -> np.ndarray:
    """Linear interpolation of a recorded path at time t"""
    if path.shape[1] == 0:
        return np.zeros(0)
    return np.array([np.interp(t, times, path[:, i]) for i in range(path.shape[1])])
