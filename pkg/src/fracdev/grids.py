"""Uniform time grids and grid-indexed sample paths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of ``[0, horizon]`` into ``n_steps`` cells.

    Nodes are ``t_k = k * horizon / n_steps`` for ``k = 0..n_steps``;
    cell ``j`` is ``[t_j, t_{j+1}]`` with midpoint ``t_j + dt/2``.
    """

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon: must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps: must be a positive integer")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def cell_midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def key(self):
        return (float(self.horizon), int(self.n_steps))


@dataclass
class SamplePath:
    """A d-dimensional state path sampled at the grid nodes.

    ``values`` has shape ``(n_steps + 1, d)``; row ``k`` is the state at
    node ``t_k``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.ndim != 2:
            raise ValueError("values must be a (n_steps+1, d) array")
        if self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"values has {self.values.shape[0]} rows, "
                f"grid has {self.grid.n_steps + 1} nodes"
            )

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def cell_averages(self) -> np.ndarray:
        """Node-average value on each cell, shape ``(n_steps, d)``."""
        return 0.5 * (self.values[:-1] + self.values[1:])


def constant_path(grid: TimeGrid, value) -> SamplePath:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return SamplePath(grid, np.tile(value, (grid.n_steps + 1, 1)))


def indicator_path(grid: TimeGrid, t: float, coordinate: int = 0, dim: int = 1) -> SamplePath:
    """Node values of ``1_{[0, t]}`` along one coordinate."""
    if not 0 <= t <= grid.horizon:
        raise ValueError("t must lie in [0, horizon]")
    values = np.zeros((grid.n_steps + 1, dim))
    values[grid.nodes <= t + 1e-12 * grid.horizon, coordinate] = 1.0
    return SamplePath(grid, values)
