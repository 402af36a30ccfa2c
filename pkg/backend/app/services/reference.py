"""
Closed-form values used as references by grid sweeps.
"""
from typing import Callable

import numpy as np

from app.core.exceptions import ProblemDefinitionError
from app.schemas.problem_file import ProblemFile

ReferenceFn = Callable[[np.ndarray], np.ndarray]


def exit_time_eikonal(spec: ProblemFile) -> ReferenceFn:
    """
    1-D minimal exit time with constant running cost c, exit cost psi and speed s:

        V(x) = min(c / lambda, c (1 - e^{-lambda d / s}) / lambda + e^{-lambda d / s} psi)

    with d the distance to the nearest face of omegaX. The opponent must not move X.
    """
    if spec.dynamics.kind != "eikonal" or len(spec.omega_x.lo) != 1:
        raise ProblemDefinitionError("exit_time_eikonal needs 1-D eikonal dynamics for X")
    if spec.costs.running.kind != "constant" or spec.costs.exit_x.kind != "constant":
        raise ProblemDefinitionError("exit_time_eikonal needs constant running and exitX costs")
    if spec.dynamics.coupling is not None:
        raise ProblemDefinitionError("exit_time_eikonal does not apply to coupled dynamics")

    lo, hi = spec.omega_x.lo[0], spec.omega_x.hi[0]
    lam = spec.costs.discount
    c = spec.costs.running.value
    psi = spec.costs.exit_x.value
    speed = float(spec.dynamics.params.get("speed_x", 1.0)) * max(abs(a[0]) for a in spec.controls.A)
    if speed <= 0:
        raise ProblemDefinitionError("exit_time_eikonal needs a nonzero speed")

    def value(z: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(z)[:, 0]
        decay = np.exp(-lam * np.minimum(x - lo, hi - x) / speed)
        return np.minimum(c / lam, c * (1.0 - decay) / lam + decay * psi)

    return value
