"""
Upper and lower Hamiltonians by enumeration over the finite control sets.

    H(a, b) = -driftX(x, a, b) . p - driftY(y, b) . q - l(x, y, a, b)
    UH = min_b max_a H        LH = max_a min_b H

UH orders the optimisation the way the LOWER convention of the solver does.
"""
import logging
from typing import NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import ProblemDefinitionError
from app.models.enums import Convention
from app.models.game import GameProblem

logger = logging.getLogger(__name__)


class Costate(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: Tuple[float, ...]
    q: Tuple[float, ...] = ()


class SaddlePoint(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    a_index: int
    b_index: int
    gap: float
    value: float


def hamiltonian_table(p: GameProblem, x, y, co: Costate) -> np.ndarray:
    """H for every control pair; rows follow controls A, columns controls B"""
    x = np.asarray(x, dtype=float).reshape(1, p.n)
    y = np.asarray(y, dtype=float).reshape(1, p.m)
    if len(co.p) != p.n or len(co.q) != p.m:
        raise ProblemDefinitionError(
            f"costate dimensions ({len(co.p)}, {len(co.q)}) do not match state ({p.n}, {p.m})"
        )
    cp = np.asarray(co.p, dtype=float)
    cq = np.asarray(co.q, dtype=float)

    table = np.empty((len(p.controls_a), len(p.controls_b)))
    for j, b in enumerate(p.controls_b.array):
        y_term = p.dynamics.velocity_y(y, b)[0] @ cq if p.m else 0.0
        for i, a in enumerate(p.controls_a.array):
            x_term = p.dynamics.velocity_x(x, a, b)[0] @ cp
            table[i, j] = -x_term - y_term - float(p.costs.running(x, y, a, b)[0])
    return table


def upper_hamiltonian(p: GameProblem, x, y, co: Costate) -> float:
    return float(hamiltonian_table(p, x, y, co).max(axis=0).min())


def lower_hamiltonian(p: GameProblem, x, y, co: Costate) -> float:
    return float(hamiltonian_table(p, x, y, co).min(axis=1).max())


def saddle_point(p: GameProblem, x, y, co: Costate, convention: Convention = Convention.LOWER) -> SaddlePoint:
    """
    Optimising pair for the requested ordering, first index on ties.

    LOWER: b* minimises max_a H, then a* maximises H(., b*).
    UPPER: a* maximises min_b H, then b* minimises H(a*, .).
    """
    table = hamiltonian_table(p, x, y, co)
    upper = float(table.max(axis=0).min())
    lower = float(table.min(axis=1).max())

    if convention == Convention.LOWER:
        j = int(np.argmin(table.max(axis=0)))
        i = int(np.argmax(table[:, j]))
        value = upper
    else:
        i = int(np.argmax(table.min(axis=1)))
        j = int(np.argmin(table[i, :]))
        value = lower
    return SaddlePoint(
        a=p.controls_a.array[i],
        b=p.controls_b.array[j],
        a_index=i,
        b_index=j,
        gap=upper - lower,
        value=value,
    )
