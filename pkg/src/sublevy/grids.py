"""Uniform tensor grids on [-L, L]^d and sampled fields on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["Grid", "Field", "GridError"]


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """d in {1, 2}, n points per axis spanning [-half_width, half_width]."""

    dim: int
    half_width: float
    points: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.points < 3:
            raise GridError(f"need at least 3 points per axis, got {self.points}")
        if not self.half_width > 0:
            raise GridError("half_width must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    def mesh(self) -> np.ndarray:
        """All grid points as rows, shape (points^dim, dim)."""
        ax = self.axis()
        if self.dim == 1:
            return ax[:, None]
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass(eq=False)
class Field:
    """Values sampled on a grid; optional off-grid callable for extension."""

    grid: Grid
    values: np.ndarray
    outside: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        self.values = vals

    @classmethod
    def sample(cls, grid: Grid, fn: Callable, outside: Callable | None = None) -> "Field":
        vals = np.asarray(fn(grid.mesh()), dtype=float).reshape(grid.shape)
        return cls(grid, vals, outside)

    def copy_with(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values, self.outside)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def interp(self, points: np.ndarray, extension: str = "constant-boundary") -> np.ndarray:
        """Piecewise-(multi)linear interpolation with the chosen extension.

        constant-boundary clamps coordinates to the box; initial-condition
        evaluates the field's `outside` callable beyond the box.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        lo, dx, n = -g.half_width, g.dx, g.points
        s = (pts - lo) / dx
        i0 = np.clip(np.floor(s).astype(int), 0, n - 2)
        theta = np.clip(s - i0, 0.0, 1.0)
        if g.dim == 1:
            v = (1 - theta[:, 0]) * self.values[i0[:, 0]] + \
                theta[:, 0] * self.values[i0[:, 0] + 1]
        else:
            ia, ib = i0[:, 0], i0[:, 1]
            ta, tb = theta[:, 0], theta[:, 1]
            v = ((1 - ta) * (1 - tb) * self.values[ia, ib]
                 + ta * (1 - tb) * self.values[ia + 1, ib]
                 + (1 - ta) * tb * self.values[ia, ib + 1]
                 + ta * tb * self.values[ia + 1, ib + 1])
        if extension == "initial-condition":
            if self.outside is None:
                raise GridError("initial-condition extension needs an off-grid callable")
            out_mask = np.any(np.abs(pts) > g.half_width * (1 + 1e-15), axis=1)
            if np.any(out_mask):
                v = np.array(v, copy=True)
                v[out_mask] = np.asarray(self.outside(pts[out_mask]), dtype=float)
        elif extension != "constant-boundary":
            raise GridError(f"unknown extension policy {extension!r}")
        return v
