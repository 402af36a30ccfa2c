"""
Polynomial coefficient tables used by problem files.

A polynomial is a list of terms ``{coef, powers}`` where ``powers`` maps variable names
(x0, x1, ..., y0, ..., a0, ..., b0, ...) to nonnegative integer exponents.
"""
import re
from typing import Dict, List, Mapping, Set

import numpy as np
from pydantic import BaseModel, Field, field_validator

VARIABLE_PATTERN = re.compile(r"^([xyab])(\d+)$")


class Term(BaseModel):
    coef: float
    powers: Dict[str, int] = Field(default_factory=dict)

    @field_validator("powers")
    @classmethod
    def _check_powers(cls, powers):
        for name, exponent in powers.items():
            if not VARIABLE_PATTERN.match(name):
                raise ValueError(f"unknown polynomial variable '{name}' (use x0, y0, a0, b0, ...)")
            if exponent < 0:
                raise ValueError(f"negative exponent for '{name}'")
        return powers


class Polynomial(BaseModel):
    terms: List[Term] = Field(default_factory=list)

    def groups(self) -> List[Set[str]]:
        """Variable families ('x', 'y', 'a', 'b') appearing together in each term"""
        return [
            {VARIABLE_PATTERN.match(name).group(1) for name, p in term.powers.items() if p > 0}
            for term in self.terms
        ]

    def evaluate(self, values: Mapping[str, np.ndarray], size: int) -> np.ndarray:
        total = np.zeros(size)
        for term in self.terms:
            product = np.full(size, term.coef, dtype=float)
            for name, exponent in term.powers.items():
                if exponent == 0:
                    continue
                if name not in values:
                    raise KeyError(f"polynomial variable '{name}' has no value")
                product = product * np.asarray(values[name], dtype=float) ** exponent
            total = total + product
        return total


def bind_variables(prefix: str, array: np.ndarray) -> Dict[str, np.ndarray]:
    """Name the columns of a (N, d) state array or the entries of a control point"""
    array = np.asarray(array, dtype=float)
    if array.ndim == 1:
        return {f"{prefix}{i}": array[i] for i in range(array.shape[0])}
    return {f"{prefix}{i}": array[:, i] for i in range(array.shape[1])}
