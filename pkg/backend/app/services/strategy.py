"""
Non-anticipating strategies and the boundary tuning of controls and strategies.

A strategy maps the opponent's control signal to an own signal of the same length, and
step k of the response only depends on opponent steps 0..k.

Tuning keeps a trajectory inside its box while a reference trajectory, started from a
nearby point under the original control, is still inside: the original control is
replayed until the next step would leave the box; then an inward control is held for
ceil(k * eps / dt) steps and the replay resumes, delayed. The replay is cut into legs of
length t_star and eps is recomputed at the start of each leg.
"""
import copy
import logging
import math
from abc import ABC, abstractmethod
from typing import Callable, NamedTuple, Optional

import numpy as np

from app.core.config import settings
from app.core.exceptions import ControllabilityError, MarginError, SimulationError
from app.models.enums import Convention, EpsMode, Player, ReportStatus, StrategyKind
from app.models.game import BOUNDARY_TOL, GameProblem
from app.models.grid import ValueGrid
from app.models.signals import ControlSignal
from app.schemas.scheme import SonerParams
from app.services.problem import inward_control, validate_controllability
from app.services.solver import exit_costs_at, one_step_table
from app.services.trajectory import JointStepper, step_count

logger = logging.getLogger(__name__)


class Tuning(NamedTuple):
    signal: ControlSignal
    inserted: int


def _other(player: Player) -> Player:
    return Player.Y if player == Player.X else Player.X


class StrategyMap(ABC):
    kind: StrategyKind

    def __init__(self, p: GameProblem, player: Player, dt: float):
        self.problem = p
        self.player = player
        self.dt = dt
        self.start = None

    @property
    def control_set(self):
        return self.problem.controls(self.player)

    @property
    def opponent_set(self):
        return self.problem.controls(_other(self.player))

    def bind(self, x0, y0) -> "StrategyMap":
        """Copy of the strategy for one playthrough from (x0, y0)"""
        clone = copy.copy(self)
        clone.start = (np.asarray(x0, dtype=float).reshape(-1), np.asarray(y0, dtype=float).reshape(-1))
        return clone

    def _check_opponent(self, opponent: ControlSignal):
        if abs(opponent.dt - self.dt) > 1e-12 * max(1.0, self.dt):
            raise SimulationError(f"opponent signal has dt={opponent.dt}, strategy uses dt={self.dt}")
        if opponent.control_set != self.opponent_set:
            raise SimulationError(f"opponent signal is not over the controls of player {_other(self.player).value}")

    def _signal(self, indices) -> ControlSignal:
        return ControlSignal(control_set=self.control_set, indices=tuple(int(i) for i in indices), dt=self.dt)

    @abstractmethod
    def respond(self, opponent: ControlSignal) -> ControlSignal:
        ...


class ConstantStrategy(StrategyMap):
    kind = StrategyKind.USER

    def __init__(self, p: GameProblem, player: Player, dt: float, index: int):
        super().__init__(p, player, dt)
        self.index = index

    def respond(self, opponent: ControlSignal) -> ControlSignal:
        self._check_opponent(opponent)
        return self._signal([self.index] * len(opponent))


class ReactiveStrategy(StrategyMap):
    """Own control at step k read from a table indexed by (k, opponent control at k)"""
    kind = StrategyKind.USER

    def __init__(self, p: GameProblem, player: Player, dt: float, lookup: np.ndarray):
        super().__init__(p, player, dt)
        self.lookup = np.asarray(lookup, dtype=int)

    @classmethod
    def random(cls, p: GameProblem, player: Player, dt: float, steps: int, rng: np.random.Generator) -> "ReactiveStrategy":
        own = len(p.controls(player))
        opp = len(p.controls(_other(player)))
        return cls(p, player, dt, rng.integers(0, own, size=(max(1, steps), opp)))

    def respond(self, opponent: ControlSignal) -> ControlSignal:
        self._check_opponent(opponent)
        rows = self.lookup.shape[0]
        return self._signal(self.lookup[k % rows, j] for k, j in enumerate(opponent.indices))


class FeedbackStrategy(StrategyMap):
    """
    Reads the simulated joint state at each step and optimises the one-step DPP table.

    The inner optimiser of the convention sees the opponent's control of the current
    step; the outer one optimises against the worst reply. A player standing on a face
    of its box takes the exit when its exit cost is no worse than the value of staying,
    the same choice the boundary operator makes. After the game is over the first
    control is played.
    """
    kind = StrategyKind.FEEDBACK

    def __init__(self, p: GameProblem, g: ValueGrid, player: Player, dt: float, convention: Convention):
        super().__init__(p, player, dt)
        self.grid = g
        self.convention = convention

    def choose(self, table: np.ndarray, opponent_index: int) -> int:
        if self.player == Player.X:
            if self.convention == Convention.LOWER:
                return int(np.argmin(table[:, opponent_index]))
            return int(np.argmin(table.max(axis=1)))
        if self.convention == Convention.UPPER:
            return int(np.argmax(table[opponent_index, :]))
        return int(np.argmax(table.min(axis=0)))

    def attained(self, table: np.ndarray, opponent_index: int) -> float:
        """Value of the control choose() picks"""
        if self.player == Player.X:
            if self.convention == Convention.LOWER:
                return float(table[:, opponent_index].min())
            return float(table.max(axis=1).min())
        if self.convention == Convention.UPPER:
            return float(table[opponent_index, :].max())
        return float(table.min(axis=0).max())

    def exit_control(self, stepper: JointStepper, stay: float, opponent_point: np.ndarray) -> Optional[int]:
        """Fastest outward control when the own state is on a face and leaving pays off"""
        p = self.problem
        own_state = stepper.x.state if self.player == Player.X else stepper.y.state
        faces = p.box(self.player).active_faces(own_state, tol=BOUNDARY_TOL)
        if not faces:
            return None
        psi_x, psi_y = exit_costs_at(p, stepper.joint_state[None, :])
        if self.player == Player.X and psi_x[0] > stay:
            return None
        if self.player == Player.Y and psi_y[0] < stay:
            return None
        velocity = _velocity(p, self.player)
        normals = np.array([p.box(self.player).outward_normal(axis, side) for axis, side in faces])
        speeds = np.array(
            [float(np.max(normals @ velocity(own_state, point, opponent_point))) for point in self.control_set.array]
        )
        best = int(np.argmax(speeds))
        if speeds[best] * self.dt <= BOUNDARY_TOL:
            return None
        return best

    def respond(self, opponent: ControlSignal) -> ControlSignal:
        self._check_opponent(opponent)
        if self.start is None:
            raise SimulationError("feedback strategy needs a start state; call bind(x0, y0) first")
        p = self.problem
        stepper = JointStepper(p, *self.start)
        own_points = self.control_set.array
        opponent_points = opponent.control_set.array
        response = []
        for k, j in enumerate(opponent.indices):
            if stepper.game_over:
                i = 0
            else:
                table = one_step_table(p, self.grid, self.dt, stepper.joint_state)[0]
                i = self.choose(table, j)
                leave = self.exit_control(stepper, self.attained(table, j), opponent_points[j])
                if leave is not None:
                    i = leave
            response.append(i)
            if self.player == Player.X:
                stepper.step(own_points[i], opponent_points[j], k * self.dt, self.dt)
            else:
                stepper.step(opponent_points[j], own_points[i], k * self.dt, self.dt)
        return self._signal(response)


class TunedStrategy(StrategyMap):
    """
    gamma tuned for a start x1 near x2: plays gamma[beta_tuned] from the reference start
    (x2, y2) and keeps the trajectory from x1, driven by the actual opponent signal, inside
    its box while the reference is inside.
    """
    kind = StrategyKind.TUNED

    def __init__(self, p, gamma: StrategyMap, x1, x2, y1, y2, sp: SonerParams, sp_y: Optional[SonerParams]):
        super().__init__(p, gamma.player, gamma.dt)
        self.gamma = gamma
        self.x1 = np.asarray(x1, dtype=float).reshape(-1)
        self.x2 = np.asarray(x2, dtype=float).reshape(-1)
        self.y1 = np.asarray(y1, dtype=float).reshape(-1)
        self.y2 = np.asarray(y2, dtype=float).reshape(-1)
        self.params = sp
        self.params_y = sp_y

    def tune(self, beta: ControlSignal) -> Tuning:
        self._check_opponent(beta)
        p = self.problem
        if self.params_y is not None:
            beta_tuned = tune_control(p, beta, self.y1, self.y2, self.params_y)
        else:
            beta_tuned = beta
        reference = self.gamma.bind(self.x2, self.y2).respond(beta_tuned)
        extra = _coupling_term(p, self.params, self.y1, self.y2, self.params_y)
        b_points = p.controls_b.array
        return _soner_replay(
            p,
            Player.X,
            reference,
            start_ref=self.x2,
            start_tuned=self.x1,
            sp=self.params,
            extra_eps=extra,
            opp_tuned=lambda k: b_points[beta.index_at(k)],
            opp_ref=lambda k: b_points[beta_tuned.index_at(k)],
            length=len(beta),
        )

    def respond(self, opponent: ControlSignal) -> ControlSignal:
        return self.tune(opponent).signal


def feedback_strategy(
    p: GameProblem, g: ValueGrid, player: Player, dt: float, convention: Convention = Convention.LOWER
) -> FeedbackStrategy:
    return FeedbackStrategy(p, g, player, dt, convention)


def _velocity(p: GameProblem, player: Player):
    if player == Player.X:
        return lambda state, own, opp: p.dynamics.velocity_x(state[None, :], own, opp)[0]
    return lambda state, own, opp: p.dynamics.velocity_y(state[None, :], own)[0]


def _sampled_deviation(p: GameProblem, z1: np.ndarray, z2: np.ndarray, sp: SonerParams, player: Player) -> float:
    """Largest distance between the two unconstrained paths over a family of probe signals"""
    rng = np.random.default_rng(sp.seed)
    velocity = _velocity(p, player)
    own = p.controls(player).array
    opp = p.controls(_other(player)).array
    steps = step_count(sp.t_star, sp.probe_dt)

    family = [(np.full(steps, i), np.zeros(steps, dtype=int)) for i in range(len(own))]
    family += [
        (rng.integers(0, len(own), steps), rng.integers(0, len(opp), steps)) for _ in range(sp.probes)
    ]
    worst = float(np.linalg.norm(z1 - z2))
    for own_idx, opp_idx in family:
        s1, s2 = z1.copy(), z2.copy()
        for k in range(steps):
            h = min(sp.probe_dt, sp.t_star - k * sp.probe_dt)
            s1 = s1 + h * velocity(s1, own[own_idx[k]], opp[opp_idx[k]])
            s2 = s2 + h * velocity(s2, own[own_idx[k]], opp[opp_idx[k]])
            worst = max(worst, float(np.linalg.norm(s1 - s2)))
    return worst


def _coupling_term(p: GameProblem, sp: SonerParams, y1, y2, sp_y: Optional[SonerParams]) -> float:
    """Extra X excursion caused by the delay the tuning of beta introduces through D b"""
    d = p.dynamics.coupling_d
    if d is None or p.m == 0 or y1 is None or y2 is None:
        return 0.0
    sp_y = sp_y or sp
    eps_y = epsilon_bound(p, y1, y2, sp_y, Player.Y)
    max_db = float(np.max(np.linalg.norm(p.controls_b.array @ d.T, axis=-1)))
    return math.exp(p.dynamics.lipschitz_l * sp.t_star) * 4.0 * max_db * sp_y.gain * eps_y


def epsilon_bound(p: GameProblem, z1, z2, sp: SonerParams, player: Player, y1=None, y2=None, sp_y=None) -> float:
    """
    Upper bound on the distance, within t_star, between trajectories started from z1
    and z2 under a common control.

    GRONWALL_BOUND: exp(L t_star) |z1 - z2|, plus for a coupled X the effect of the
    tuned opponent signal when y1, y2 are given. SAMPLED: largest distance over the
    probe family.
    """
    z1 = np.asarray(z1, dtype=float).reshape(-1)
    z2 = np.asarray(z2, dtype=float).reshape(-1)
    if sp.eps_mode == EpsMode.SAMPLED:
        eps = _sampled_deviation(p, z1, z2, sp, player)
    else:
        eps = math.exp(p.dynamics.lipschitz_l * sp.t_star) * float(np.linalg.norm(z1 - z2))
    if player == Player.X:
        eps += _coupling_term(p, sp, y1, y2, sp_y)
    return eps


def _soner_replay(
    p: GameProblem,
    player: Player,
    reference: ControlSignal,
    start_ref: np.ndarray,
    start_tuned: np.ndarray,
    sp: SonerParams,
    extra_eps: float,
    opp_tuned: Callable[[int], np.ndarray],
    opp_ref: Callable[[int], np.ndarray],
    length: Optional[int] = None,
) -> Tuning:
    """
    Replay `reference` from start_tuned with inward insertions.

    opp_tuned(k) is the opponent control at output step k, opp_ref(k) the one the
    reference trajectory sees at source step k. Without `length` the whole reference is
    replayed; with it the output is cut to that many steps.
    """
    box = p.box(player)
    controls = p.controls(player)
    if box.dim == 0:
        signal = reference if length is None else reference.extended(length).prefix(length)
        return Tuning(signal, 0)

    velocity = _velocity(p, player)
    points = controls.array
    dt = reference.dt
    leg_steps = step_count(sp.t_star, dt)
    # repeated hits at one source step insert again, bounded by the inward margin
    max_repeats = 1 + (math.ceil(p.dynamics.bound_m / sp.zeta) if sp.zeta > 0 else 0)

    out = []
    inserted = 0
    src = 0
    ref = np.asarray(start_ref, dtype=float).copy()
    tuned = np.asarray(start_tuned, dtype=float).copy()
    ref_exited = False
    repeat_src, repeats = -1, 0

    def done() -> bool:
        return src >= len(reference) if length is None else len(out) >= length

    while not done():
        eps = epsilon_bound(p, ref, tuned, sp, player) + extra_eps
        insert = int(math.ceil(sp.gain * eps / dt - 1e-9)) if eps > 0 else 0
        steps = 0
        while not done() and steps < leg_steps:
            own = reference.index_at(src)
            target = tuned + dt * velocity(tuned, points[own], opp_tuned(len(out)))
            leaving = box.exterior_distance(target) > BOUNDARY_TOL
            if insert and leaving and not ref_exited and (src != repeat_src or repeats < max_repeats):
                repeats = repeats + 1 if src == repeat_src else 1
                repeat_src = src
                inward = inward_control(p, player, tuned, box.active_faces(target, tol=0.0))
                for _ in range(insert):
                    if length is not None and len(out) >= length:
                        break
                    tuned = tuned + dt * velocity(tuned, points[inward], opp_tuned(len(out)))
                    out.append(inward)
                    inserted += 1
                break
            out.append(own)
            tuned = target
            ref = ref + dt * velocity(ref, points[own], opp_ref(src))
            ref_exited = ref_exited or box.exterior_distance(ref) > BOUNDARY_TOL
            src += 1
            steps += 1

    signal = ControlSignal(control_set=controls, indices=tuple(out), dt=dt)
    if length is not None:
        signal = signal.prefix(length)
    return Tuning(signal, inserted)


def soner_tuning(p: GameProblem, beta: ControlSignal, y1, y2, sp: SonerParams) -> Tuning:
    y1 = np.asarray(y1, dtype=float).reshape(-1)
    y2 = np.asarray(y2, dtype=float).reshape(-1)
    a_first = p.controls_a.array[0]
    return _soner_replay(
        p,
        Player.Y,
        beta,
        start_ref=y1,
        start_tuned=y2,
        sp=sp,
        extra_eps=0.0,
        opp_tuned=lambda k: a_first,
        opp_ref=lambda k: a_first,
    )


def tune_control(p: GameProblem, beta: ControlSignal, y1, y2, sp: SonerParams) -> ControlSignal:
    """
    Tuned beta for the start y2, with y1 under beta as the reference. The output is
    longer than beta by the inserted steps; without a boundary hit it equals beta.
    """
    return soner_tuning(p, beta, y1, y2, sp).signal


def tune_strategy(
    p: GameProblem,
    gamma: StrategyMap,
    x1,
    x2,
    y1,
    y2,
    sp: SonerParams,
    sp_y: Optional[SonerParams] = None,
) -> TunedStrategy:
    if gamma.player != Player.X:
        raise SimulationError("strategy tuning applies to strategies of player X")
    if p.dynamics.coupled and sp.zeta <= sp.c_tilde:
        raise MarginError(f"zeta={sp.zeta:.6g} <= c_tilde={sp.c_tilde:.6g}")
    if sp_y is None and p.m > 0:
        sp_y = sp
    return TunedStrategy(p, gamma, x1, x2, y1, y2, sp, sp_y)


def soner_params(
    p: GameProblem,
    player: Player,
    t_star: float,
    boundary_samples: int = settings.VALIDATION_SAMPLES,
    eps_mode: EpsMode = EpsMode.GRONWALL_BOUND,
    k_gain: Optional[float] = None,
) -> SonerParams:
    """Margin zeta and coupling bound c_tilde from the controllability check of one player"""
    report = validate_controllability(p, boundary_samples)
    entries = [e for e in report.entries if e.player == player]
    if not entries:
        return SonerParams(t_star=t_star, k_gain=k_gain, eps_mode=eps_mode)
    failing = [e for e in entries if e.inward_index is None]
    if failing:
        raise ControllabilityError(
            f"player {player.value} has no inward control at {len(failing)} sampled boundary points, "
            f"first at {failing[0].point}"
        )
    zeta = max(0.0, min(e.zeta for e in entries))
    c_tilde = max(e.c_tilde for e in entries)
    if report.status == ReportStatus.FAIL:
        logger.warning(f"{p.name}: controllability report FAILs; tuning player {player.value} with zeta={zeta:.6g}")
    return SonerParams(t_star=t_star, k_gain=k_gain, zeta=zeta, c_tilde=c_tilde, eps_mode=eps_mode)
