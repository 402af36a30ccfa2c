"""
Tensor grid over the closed product of the two boxes.

Axes are ordered x-coordinates first, then y-coordinates. Values and roles are stored
as tensors of shape ``nodes_per_axis``; flat node indices follow C order.
"""
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.models.enums import NodeRole


class ValueGrid(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    axes: Tuple[np.ndarray, ...]
    n_x: int
    values: np.ndarray
    roles: np.ndarray

    @property
    def nodes_per_axis(self) -> Tuple[int, ...]:
        return tuple(len(axis) for axis in self.axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def lo(self) -> np.ndarray:
        return np.array([axis[0] for axis in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([axis[-1] for axis in self.axes])

    @property
    def spacing(self) -> np.ndarray:
        return np.array([axis[1] - axis[0] for axis in self.axes])

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def flat_roles(self) -> np.ndarray:
        return self.roles.reshape(-1)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (size, dim)"""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def node_index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.nodes_per_axis))

    def role_counts(self) -> dict:
        return {role: int(np.sum(self.roles == role.value)) for role in NodeRole}

    def with_values(self, values: np.ndarray) -> "ValueGrid":
        values = np.asarray(values, dtype=float).reshape(self.nodes_per_axis)
        return self.model_copy(update={"values": values})
