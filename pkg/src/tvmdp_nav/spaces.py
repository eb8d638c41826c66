"""Continuous/discrete state and action spaces for a 2-D workspace.

Cells are addressed either by an ``(i, j)`` tuple or by a flat index
``i * ny + j``; the planners work on flat indices internally.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid over the workspace plus the action lattice.

    Parameters
    ----------
    origin : (x0, y0) of the lower-left corner, meters
    extent : (width, height), meters; positive multiples of ``cell_size``
    cell_size : h, meters
    action_levels_per_dim : number of velocity samples per axis
    action_bound : velocities span [-action_bound, action_bound], m/s
    """

    origin: tuple[float, float]
    extent: tuple[float, float]
    cell_size: float
    action_levels_per_dim: int = 3
    action_bound: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        for e in self.extent:
            n = round(e / self.cell_size)
            if e <= 0 or n < 1 or abs(n * self.cell_size - e) > 1e-9 * max(1.0, e):
                raise ValueError(
                    f"extent {self.extent} is not a positive multiple of cell_size {self.cell_size}")
        if self.action_levels_per_dim < 1:
            raise ValueError("action_levels_per_dim must be >= 1")
        if self.action_bound < 0:
            raise ValueError("action_bound must be non-negative")

    @cached_property
    def shape(self) -> tuple[int, int]:
        return (int(round(self.extent[0] / self.cell_size)),
                int(round(self.extent[1] / self.cell_size)))

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def n_actions(self) -> int:
        return self.action_levels_per_dim ** 2

    @cached_property
    def cell_ij(self) -> np.ndarray:
        """(n_cells, 2) integer indices, in flat-index order."""
        nx, ny = self.shape
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return np.column_stack([ii.ravel(), jj.ravel()])

    @cached_property
    def centers(self) -> np.ndarray:
        """(n_cells, 2) cell centers in flat-index order."""
        return np.asarray(self.origin) + (self.cell_ij + 0.5) * self.cell_size

    @cached_property
    def actions(self) -> np.ndarray:
        return np.asarray(action_lattice(self))

    def flat(self, s) -> int:
        i, j = s
        return int(i) * self.shape[1] + int(j)

    def unflat(self, idx: int) -> tuple[int, int]:
        i, j = divmod(int(idx), self.shape[1])
        return (i, j)

    def contains(self, s) -> bool:
        i, j = s
        return 0 <= i < self.shape[0] and 0 <= j < self.shape[1]


def discretize_state(x, grid: Grid) -> tuple[int, int]:
    """psi_s: the cell containing ``x``, clamped to the grid.

    Points on a shared edge belong to the cell with the larger index.
    """
    idx = discretize_many(np.asarray(x, dtype=float).reshape(1, 2), grid)[0]
    return (int(idx[0]), int(idx[1]))


def discretize_many(xs: np.ndarray, grid: Grid) -> np.ndarray:
    """Vectorized psi_s for an (m, 2) array; returns (m, 2) int indices."""
    rel = (np.asarray(xs, dtype=float) - np.asarray(grid.origin)) / grid.cell_size
    ij = np.floor(rel).astype(np.int64)
    nx, ny = grid.shape
    ij[..., 0] = np.clip(ij[..., 0], 0, nx - 1)
    ij[..., 1] = np.clip(ij[..., 1], 0, ny - 1)
    return ij


def discretize_flat(xs: np.ndarray, grid: Grid) -> np.ndarray:
    ij = discretize_many(xs, grid)
    return ij[..., 0] * grid.shape[1] + ij[..., 1]


def cell_center(s, grid: Grid) -> np.ndarray:
    if not grid.contains(s):
        raise InvalidStateError(f"cell {tuple(s)} outside grid of shape {grid.shape}")
    return np.asarray(grid.origin) + (np.asarray(s, dtype=float) + 0.5) * grid.cell_size


def cell_box(s, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """psi_s^{-1}(s) as (lower corner, upper corner)."""
    lo = np.asarray(grid.origin) + np.asarray(s, dtype=float) * grid.cell_size
    return lo, lo + grid.cell_size


def action_lattice(grid: Grid) -> list[np.ndarray]:
    """All ``levels**2`` velocity actions; index = i_vx * levels + i_vy."""
    n = grid.action_levels_per_dim
    if n == 1:
        axis = np.array([0.0])
    else:
        axis = np.linspace(-grid.action_bound, grid.action_bound, n)
    return [np.array([vx, vy]) for vx, vy in itertools.product(axis, axis)]


def discretize_action(u, grid: Grid) -> int:
    """psi_a: index of the nearest lattice action (lowest index on ties)."""
    d = np.linalg.norm(grid.actions - np.asarray(u, dtype=float), axis=1)
    return int(np.argmin(d))


def zero_action_index(grid: Grid) -> int:
    return discretize_action((0.0, 0.0), grid)


@dataclass(frozen=True)
class TimeAxis:
    t0: float
    dt: float
    horizon: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")

    def t(self, k: int) -> float:
        return self.t0 + k * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.horizon + 1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle box in meters."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ValueError(f"degenerate obstacle box {self}")

    def contains(self, x) -> bool:
        return bool(self.xmin <= x[0] <= self.xmax and self.ymin <= x[1] <= self.ymax)

    def contains_many(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return ((xs[..., 0] >= self.xmin) & (xs[..., 0] <= self.xmax)
                & (xs[..., 1] >= self.ymin) & (xs[..., 1] <= self.ymax))

    def nearest_point(self, x) -> np.ndarray:
        return np.array([min(max(x[0], self.xmin), self.xmax),
                         min(max(x[1], self.ymin), self.ymax)])


def obstacle_mask(grid: Grid, obstacles) -> np.ndarray:
    """Boolean mask over flat cells whose center lies in any obstacle."""
    mask = np.zeros(grid.n_cells, dtype=bool)
    for box in obstacles:
        mask |= box.contains_many(grid.centers)
    return mask
