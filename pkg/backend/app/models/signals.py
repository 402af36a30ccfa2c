"""
Piecewise-constant control signals, stored as indices into a control set.
"""
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from app.core.exceptions import ProblemDefinitionError
from app.models.game import ControlSet


class ControlSignal(BaseModel):
    model_config = ConfigDict(frozen=True)

    control_set: ControlSet
    indices: Tuple[int, ...]
    dt: PositiveFloat

    @model_validator(mode="after")
    def _check_indices(self):
        size = len(self.control_set)
        for k, index in enumerate(self.indices):
            if not 0 <= index < size:
                raise ProblemDefinitionError(f"signal step {k}: control index {index} not in 0..{size - 1}")
        return self

    @classmethod
    def constant(cls, control_set: ControlSet, index: int, count: int, dt: float) -> "ControlSignal":
        return cls(control_set=control_set, indices=(index,) * count, dt=dt)

    @classmethod
    def random(cls, control_set: ControlSet, count: int, dt: float, rng: np.random.Generator) -> "ControlSignal":
        return cls(control_set=control_set, indices=tuple(int(i) for i in rng.integers(0, len(control_set), count)), dt=dt)

    @classmethod
    def from_points(cls, control_set: ControlSet, points: Sequence, dt: float) -> "ControlSignal":
        return cls(control_set=control_set, indices=tuple(control_set.index_of(p) for p in points), dt=dt)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def horizon(self) -> float:
        return self.dt * len(self.indices)

    @property
    def samples(self) -> np.ndarray:
        return self.control_set.array[list(self.indices)] if self.indices else np.zeros((0, self.control_set.dim))

    def index_at(self, k: int) -> int:
        # past the end the last sample repeats; an empty signal plays the first control
        if not self.indices:
            return 0
        return self.indices[min(k, len(self.indices) - 1)]

    def sample(self, k: int) -> np.ndarray:
        return self.control_set.array[self.index_at(k)]

    def prefix(self, count: int) -> "ControlSignal":
        return self.model_copy(update={"indices": self.indices[:count]})

    def extended(self, count: int) -> "ControlSignal":
        if count <= len(self.indices):
            return self
        tail = (self.index_at(len(self.indices)),) * (count - len(self.indices))
        return self.model_copy(update={"indices": self.indices + tail})

    def agrees_with(self, other: "ControlSignal", count: int) -> bool:
        return self.indices[:count] == other.indices[:count]

    def to_frame(self) -> pd.DataFrame:
        samples = self.samples
        columns = {"step": np.arange(len(self)), "time": self.dt * np.arange(len(self))}
        columns.update({f"u{i}": samples[:, i] for i in range(self.control_set.dim)})
        return pd.DataFrame(columns)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path
