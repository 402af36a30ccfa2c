"""
Named dynamics and cost builtins referenced by problem files.
"""
import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import ProblemDefinitionError
from app.models.game import Dynamics
from app.schemas.problem_file import CostSpec, DynamicsSpec
from app.services.polynomial import Polynomial, bind_variables

logger = logging.getLogger(__name__)


def _matrix(params: Dict, key: str, shape: Tuple[int, int], default: Optional[np.ndarray]) -> np.ndarray:
    if key not in params:
        if default is None:
            raise ProblemDefinitionError(f"linear dynamics needs parameter '{key}' of shape {shape}")
        return default
    value = np.asarray(params[key], dtype=float).reshape(-1)
    if value.size != shape[0] * shape[1]:
        raise ProblemDefinitionError(f"parameter '{key}' must have {shape[0]}x{shape[1]} entries")
    return value.reshape(shape)


def _vector(params: Dict, key: str, size: int) -> np.ndarray:
    value = np.asarray(params.get(key, np.zeros(size)), dtype=float).reshape(-1)
    if value.size != size:
        raise ProblemDefinitionError(f"parameter '{key}' must have {size} entries")
    return value


def _frozen(m: int) -> Callable:
    def drift(y, b):
        return np.zeros((np.asarray(y).shape[0], m))
    return drift


def _eikonal(spec: DynamicsSpec, n: int, m: int, dim_a: int, dim_b: int):
    speed_x = float(spec.params.get("speed_x", 1.0))
    speed_y = float(spec.params.get("speed_y", 1.0))
    if dim_a != n:
        raise ProblemDefinitionError(f"eikonal dynamics needs A points of dimension {n}, got {dim_a}")
    if m > 0 and dim_b != m:
        raise ProblemDefinitionError(f"eikonal dynamics needs B points of dimension {m}, got {dim_b}")

    def drift_x(x, a):
        return np.broadcast_to(speed_x * np.asarray(a, dtype=float), (x.shape[0], n)).copy()

    if m == 0:
        return drift_x, _frozen(0)

    def drift_y(y, b):
        return np.broadcast_to(speed_y * np.asarray(b, dtype=float), (y.shape[0], m)).copy()

    return drift_x, drift_y


def _linear(spec: DynamicsSpec, n: int, m: int, dim_a: int, dim_b: int):
    p = spec.params
    fx = _matrix(p, "fx", (n, n), np.zeros((n, n)))
    ga = _matrix(p, "ga", (n, dim_a), np.eye(n) if dim_a == n else None)
    cx = _vector(p, "cx", n)
    fy = _matrix(p, "fy", (m, m), np.zeros((m, m)))
    hb = _matrix(p, "hb", (m, dim_b), np.eye(m) if dim_b == m else (np.zeros((0, dim_b)) if m == 0 else None))
    cy = _vector(p, "cy", m)

    def drift_x(x, a):
        return x @ fx.T + ga @ np.asarray(a, dtype=float) + cx

    def drift_y(y, b):
        return y @ fy.T + hb @ np.asarray(b, dtype=float) + cy

    return drift_x, drift_y


def _surge_tank(spec: DynamicsSpec, n: int, m: int, dim_a: int, dim_b: int):
    # x1' = x2, x2' = -alpha + beta; beta enters through the coupling column (0, 1)
    if n != 2 or dim_a != 1 or dim_b != 1:
        raise ProblemDefinitionError("surge_tank needs a 2-D omegaX and scalar controls alpha, beta")

    def drift_x(x, a):
        velocity = np.zeros_like(x)
        velocity[:, 0] = x[:, 1]
        velocity[:, 1] = -float(np.asarray(a).reshape(-1)[0])
        return velocity

    return drift_x, _frozen(m)


def _polynomial(spec: DynamicsSpec, n: int, m: int, dim_a: int, dim_b: int):
    if len(spec.x) != n or len(spec.y) != m:
        raise ProblemDefinitionError(
            f"polynomial dynamics needs {n} x-components and {m} y-components, "
            f"got {len(spec.x)} and {len(spec.y)}"
        )
    x_polys = [Polynomial(terms=terms) for terms in spec.x]
    y_polys = [Polynomial(terms=terms) for terms in spec.y]
    for poly in x_polys:
        if any(group - {"x", "a"} for group in poly.groups()):
            raise ProblemDefinitionError("x-drift polynomials may only use x* and a* variables")
    for poly in y_polys:
        if any(group - {"y", "b"} for group in poly.groups()):
            raise ProblemDefinitionError("y-drift polynomials may only use y* and b* variables")

    def drift_x(x, a):
        values = {**bind_variables("x", x), **bind_variables("a", a)}
        return np.stack([poly.evaluate(values, x.shape[0]) for poly in x_polys], axis=-1)

    if m == 0:
        return drift_x, _frozen(0)

    def drift_y(y, b):
        values = {**bind_variables("y", y), **bind_variables("b", b)}
        return np.stack([poly.evaluate(values, y.shape[0]) for poly in y_polys], axis=-1)

    return drift_x, drift_y


DYNAMICS_BUILTINS = {
    "eikonal": _eikonal,
    "linear": _linear,
    "surge_tank": _surge_tank,
    "polynomial": _polynomial,
}


def make_dynamics(spec: DynamicsSpec, n: int, m: int, dim_a: int, dim_b: int) -> Dynamics:
    builder = DYNAMICS_BUILTINS[spec.kind]
    drift_x, drift_y = builder(spec, n, m, dim_a, dim_b)
    coupling = spec.coupling
    if coupling is None and spec.kind == "surge_tank":
        coupling = [[0.0], [1.0]]
    logger.debug(f"Built {spec.kind} dynamics (n={n}, m={m}, coupled={coupling is not None})")
    return Dynamics(
        drift_x=drift_x,
        drift_y=drift_y,
        coupling_d=coupling,
        lipschitz_l=spec.lipschitz,
        bound_m=spec.bound,
    )


def make_running_cost(spec: CostSpec) -> Callable:
    if spec.kind == "constant":
        value = spec.value

        def constant(x, y, a, b):
            return np.full(np.asarray(x).shape[0], value)
        return constant

    poly = Polynomial(terms=spec.terms)

    def running(x, y, a, b):
        values = {
            **bind_variables("x", x),
            **bind_variables("y", y),
            **bind_variables("a", a),
            **bind_variables("b", b),
        }
        return poly.evaluate(values, np.asarray(x).shape[0])
    return running


def make_exit_cost(spec: CostSpec, label: str) -> Callable:
    if spec.kind == "constant":
        value = spec.value

        def constant(x, y):
            return np.full(np.asarray(x).shape[0], value)
        return constant

    poly = Polynomial(terms=spec.terms)
    if any(group & {"a", "b"} for group in poly.groups()):
        raise ProblemDefinitionError(f"{label} exit cost may only depend on x* and y*")

    def exit_cost(x, y):
        values = {**bind_variables("x", x), **bind_variables("y", y)}
        return poly.evaluate(values, np.asarray(x).shape[0])
    return exit_cost

