"""
Grid construction, node-role tagging and multilinear interpolation.
"""
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator

from app.core.config import settings
from app.core.exceptions import GridError
from app.models.enums import NodeRole
from app.models.game import GameProblem
from app.models.grid import ValueGrid

logger = logging.getLogger(__name__)

POINT_TOL = 1e-12


def _nodes_per_axis(p: GameProblem, nodes: Union[int, Sequence[int]]) -> tuple:
    if isinstance(nodes, (int, np.integer)):
        counts = (int(nodes),) * p.dim
    else:
        counts = tuple(int(n) for n in nodes)
        if len(counts) == 1:
            counts = counts * p.dim
    if len(counts) != p.dim:
        raise GridError(f"grid gives {len(counts)} axes but the state has {p.dim} coordinates")
    if any(n < 2 for n in counts):
        raise GridError(f"every axis needs at least 2 nodes, got {list(counts)}")
    return counts


def build_grid(p: GameProblem, nodes_per_axis: Union[int, Sequence[int]]) -> ValueGrid:
    if p.dim > settings.MAX_STATE_DIM:
        raise GridError(
            f"state dimension {p.dim} exceeds the tensor-grid cap {settings.MAX_STATE_DIM}"
        )
    counts = _nodes_per_axis(p, nodes_per_axis)
    total = int(np.prod(counts))
    if total > settings.MAX_GRID_NODES:
        raise GridError(
            f"grid {list(counts)} has {total} nodes, above the cap of {settings.MAX_GRID_NODES}; "
            f"use a coarser grid"
        )

    lo = np.concatenate([p.omega_x.lo_array, p.omega_y.lo_array])
    hi = np.concatenate([p.omega_x.hi_array, p.omega_y.hi_array])
    axes = tuple(np.linspace(lo[i], hi[i], counts[i]) for i in range(p.dim))

    index = np.indices(counts)
    edge = np.stack([(index[i] == 0) | (index[i] == counts[i] - 1) for i in range(p.dim)])
    on_x = np.any(edge[: p.n], axis=0)
    on_y = np.any(edge[p.n:], axis=0) if p.m else np.zeros(counts, dtype=bool)

    roles = np.full(counts, NodeRole.INTERIOR.value, dtype=np.int8)
    roles[on_x & ~on_y] = NodeRole.X_FACE.value
    roles[~on_x & on_y] = NodeRole.Y_FACE.value
    roles[on_x & on_y] = NodeRole.CORNER.value

    logger.debug(f"Built grid {list(counts)} ({total} nodes) for {p.name}")
    return ValueGrid(axes=axes, n_x=p.n, values=np.zeros(counts), roles=roles)


def _checked_points(g: ValueGrid, z) -> np.ndarray:
    points = np.atleast_2d(np.asarray(z, dtype=float))
    if points.shape[-1] != g.dim:
        raise GridError(f"query points have {points.shape[-1]} coordinates, grid has {g.dim}")
    outside = np.max(np.maximum(g.lo - points, points - g.hi), axis=-1) > POINT_TOL
    if np.any(outside):
        raise GridError(
            f"point {points[np.argmax(outside)].tolist()} lies outside the closed domain; clamp feet first"
        )
    return np.clip(points, g.lo, g.hi)


def interpolate(g: ValueGrid, z):
    """Multilinear interpolation; a single state gives a float, a batch (N, dim) an array"""
    single = np.asarray(z).ndim == 1
    points = _checked_points(g, z)
    interpolator = RegularGridInterpolator(g.axes, g.values, method="linear", bounds_error=True)
    values = interpolator(points)
    return float(values[0]) if single else values


def interpolation_weights(g: ValueGrid, points: np.ndarray) -> sparse.csr_matrix:
    """
    Sparse matrix W with W @ flat_values equal to the multilinear interpolant at points.

    Rows have at most 2**dim nonzero weights, all nonnegative and summing to one.
    """
    points = _checked_points(g, points)
    counts = np.array(g.nodes_per_axis)
    scaled = (points - g.lo) / g.spacing
    base = np.clip(np.floor(scaled).astype(int), 0, counts - 2)
    frac = np.clip(scaled - base, 0.0, 1.0)

    n_points = points.shape[0]
    rows, cols, weights = [], [], []
    for corner in np.ndindex(*(2,) * g.dim):
        offset = np.array(corner)
        weight = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=-1)
        index = np.ravel_multi_index(tuple((base + offset).T), g.nodes_per_axis)
        rows.append(np.arange(n_points))
        cols.append(index)
        weights.append(weight)
    return sparse.csr_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_points, g.size),
    )


def grid_frame(g: ValueGrid) -> pd.DataFrame:
    coords = g.coordinates()
    columns = {f"x{i}": coords[:, i] for i in range(g.n_x)}
    columns.update({f"y{i}": coords[:, g.n_x + i] for i in range(g.dim - g.n_x)})
    columns["role"] = [NodeRole(r).name for r in g.flat_roles]
    columns["value"] = g.flat_values
    return pd.DataFrame(columns)


def write_grid_csv(g: ValueGrid, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid_frame(g).to_csv(path, index=False, float_format="%.12g")
    return path
