"""
Exception hierarchy for the solver.

Validations report findings through PASS/WARN/FAIL reports; exceptions are reserved
for inputs the library cannot work with.
"""
from typing import Optional


class ExitGameError(Exception):
    """Base class for every error raised by the package"""


class ProblemDefinitionError(ExitGameError):
    """Inconsistent game datum (dimensions, builtin parameters, control sets)"""


class ConfigParseError(ProblemDefinitionError):
    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class GridError(ExitGameError):
    """Grid too large, dimension cap exceeded, or a query point outside the closed box"""


class SchemeError(ExitGameError):
    """Time step incompatible with the discount or the grid spacing"""


class ConvergenceError(ExitGameError):
    def __init__(self, message: str, residual: float, iterations: int, report=None):
        self.residual = residual
        self.iterations = iterations
        self.report = report
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} sweeps)")


class ControllabilityError(ExitGameError):
    """No strictly inward control at a boundary point (boundary controllability fails)"""


class MarginError(ControllabilityError):
    """Inward margin zeta does not dominate the coupling bound c_tilde"""


class NotExactifiableError(ExitGameError):
    """Some Euler foot does not land on a grid node"""


class SimulationError(ExitGameError):
    """Invalid horizon, mismatched signal steps or start outside the domain"""
