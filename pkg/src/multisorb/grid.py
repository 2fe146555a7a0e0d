"""Uniform structured mesh (1D/2D) with the discrete operators used by the solvers.

Cell-centered finite volumes: cell ``i`` sits at ``origin + (i + 1/2) h``.
Dirichlet data is imposed at face midpoints through ghost values
``2*bc - f_interior``, which is second-order accurate and keeps the summed
stencil telescoping exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


def _per_axis(value, dim: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return tuple(float(value) for _ in range(dim))
    vals = tuple(float(v) for v in value)
    if len(vals) != dim:
        raise ValueError(f"{name} must have {dim} entries, got {len(vals)}")
    return vals


class Grid:
    """Uniform mesh on a box, 1 or 2 space dimensions."""

    def __init__(self, extent, cells, origin=None, dim: int | None = None):
        if dim is None:
            dim = 1 if np.isscalar(cells) else len(cells)
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        self.dim = dim
        self.cells = tuple(int(c) for c in ([cells] if np.isscalar(cells) else cells))
        if len(self.cells) != dim:
            raise ValueError("cells/extent dimensions disagree")
        if any(c < 3 for c in self.cells):
            raise ValueError(f"need at least 3 cells per axis, got {self.cells}")
        self.extent = _per_axis(extent, dim, "extent")
        if any(e <= 0 for e in self.extent):
            raise ValueError(f"extent must be positive, got {self.extent}")
        self.origin = _per_axis(0.0 if origin is None else origin, dim, "origin")
        self.h = tuple(e / c for e, c in zip(self.extent, self.cells))

    def __repr__(self):
        return f"Grid(extent={self.extent}, cells={self.cells}, origin={self.origin})"

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.cells == other.cells
            and self.extent == other.extent
            and self.origin == other.origin
        )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.cells[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.h[axis]

    def meshes(self) -> list[np.ndarray]:
        """Coordinate arrays of cell centers, each of shape ``self.shape``."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        if self.dim == 1:
            return axes
        return list(np.meshgrid(*axes, indexing="ij"))

    def center(self) -> tuple[float, ...]:
        return tuple(o + 0.5 * e for o, e in zip(self.origin, self.extent))

    def distance_from(self, point) -> np.ndarray:
        """Euclidean distance of every cell center from a point."""
        point = _per_axis(point, self.dim, "point")
        meshes = self.meshes()
        sq = np.zeros(self.shape)
        for axis in range(self.dim):
            sq += (meshes[axis] - point[axis]) ** 2
        return np.sqrt(sq)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass
class Field:
    """Per-cell scalar values bound to a grid.  Values must be finite."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "Field":
        meshes = grid.meshes()
        return cls(grid, np.asarray(func(*meshes), dtype=float))


@dataclass(frozen=True)
class VacuumBox:
    """Homogeneous Dirichlet data, used to emulate the whole-space problem."""


@dataclass(frozen=True)
class DirichletConcentration:
    """Per-species boundary concentration values (floats or callables of t)."""

    values: tuple

    def __post_init__(self):
        for v in self.values:
            if not callable(v) and float(v) < 0:
                raise ValueError(f"Dirichlet values must be nonnegative, got {v}")

    def at(self, t: float) -> np.ndarray:
        return np.array([float(v(t)) if callable(v) else float(v) for v in self.values])


def _face_value(bc, coords) -> float:
    return float(bc(coords)) if callable(bc) else float(bc)


def _boundary_faces(grid: Grid, axis: int, side: int):
    """Coordinates of the face midpoints on one boundary side (2D only)."""
    other = 1 - axis
    centers = grid.axis_centers(other)
    pos = grid.origin[axis] + (0.0 if side == 0 else grid.extent[axis])
    if axis == 0:
        return [(pos, c) for c in centers]
    return [(c, pos) for c in centers]


def lap_values(grid: Grid, f: np.ndarray, bc) -> np.ndarray:
    """Standard 3/5-point Laplacian with ghost-value Dirichlet boundaries.

    ``bc`` is a scalar used on every boundary face, or a callable of the face
    midpoint coordinates (a float in 1D, an (x, y) tuple in 2D).
    """
    if grid.dim == 1:
        n = grid.cells[0]
        h2 = grid.h[0] ** 2
        pad = np.empty(n + 2)
        pad[1:-1] = f
        x_lo = grid.origin[0]
        x_hi = grid.origin[0] + grid.extent[0]
        pad[0] = 2.0 * _face_value(bc, x_lo) - f[0]
        pad[-1] = 2.0 * _face_value(bc, x_hi) - f[-1]
        return (pad[:-2] - 2.0 * f + pad[2:]) / h2

    nx, ny = grid.cells
    hx2, hy2 = grid.h[0] ** 2, grid.h[1] ** 2
    padx = np.empty((nx + 2, ny))
    padx[1:-1] = f
    pady = np.empty((nx, ny + 2))
    pady[:, 1:-1] = f
    if callable(bc):
        left = np.array([_face_value(bc, c) for c in _boundary_faces(grid, 0, 0)])
        right = np.array([_face_value(bc, c) for c in _boundary_faces(grid, 0, 1)])
        bottom = np.array([_face_value(bc, c) for c in _boundary_faces(grid, 1, 0)])
        top = np.array([_face_value(bc, c) for c in _boundary_faces(grid, 1, 1)])
    else:
        left = right = bottom = top = float(bc)
    padx[0] = 2.0 * left - f[0, :]
    padx[-1] = 2.0 * right - f[-1, :]
    pady[:, 0] = 2.0 * bottom - f[:, 0]
    pady[:, -1] = 2.0 * top - f[:, -1]
    return (padx[:-2] - 2.0 * f + padx[2:]) / hx2 + (pady[:, :-2] - 2.0 * f + pady[:, 2:]) / hy2


def laplacian(f: Field, bc) -> Field:
    return Field(f.grid, lap_values(f.grid, f.values, bc))


def integrate_values(grid: Grid, f: np.ndarray) -> float:
    return float(np.sum(f) * grid.cell_volume)


def integrate(f: Field) -> float:
    """Cell-volume quadrature: sum of values times h**dim."""
    return integrate_values(f.grid, f.values)


def gradient_energy_values(grid: Grid, f: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Squared-difference energy over interior faces: sum ((f_R - f_L)/h)^2 h^dim.

    With ``mask`` given, only faces whose two cells both lie in the mask count
    (used for interior-window norms).
    """
    vol = grid.cell_volume
    total = 0.0
    if grid.dim == 1:
        d = (f[1:] - f[:-1]) / grid.h[0]
        if mask is not None:
            d = d[mask[1:] & mask[:-1]]
        total += float(np.sum(d**2)) * vol
    else:
        dx = (f[1:, :] - f[:-1, :]) / grid.h[0]
        dy = (f[:, 1:] - f[:, :-1]) / grid.h[1]
        if mask is not None:
            dx = dx[mask[1:, :] & mask[:-1, :]]
            dy = dy[mask[:, 1:] & mask[:, :-1]]
        total += float(np.sum(dx**2)) * vol + float(np.sum(dy**2)) * vol
    return total


def gradient_energy(f: Field) -> float:
    return gradient_energy_values(f.grid, f.values)


def support_values(grid: Grid, f: np.ndarray, eps_supp: float, center) -> tuple[np.ndarray, float]:
    """Thresholded support mask {f > eps_supp} and its radius from a center.

    The radius is the largest distance from ``center`` to a cell center in the
    support; an empty support has radius 0.
    """
    if eps_supp <= 0:
        raise ValueError(f"eps_supp must be positive, got {eps_supp}")
    mask = f > eps_supp
    if not mask.any():
        return mask, 0.0
    return mask, float(np.max(grid.distance_from(center)[mask]))


def support(f: Field, eps_supp: float, center) -> tuple[np.ndarray, float]:
    return support_values(f.grid, f.values, eps_supp, center)


def interior_mask(grid: Grid, margin_cells: int) -> np.ndarray:
    """Boolean mask of cells at least ``margin_cells`` away from every boundary."""
    if margin_cells < 0:
        raise ValueError("margin_cells must be nonnegative")
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.dim == 1:
        n = grid.cells[0]
        if 2 * margin_cells < n:
            mask[margin_cells : n - margin_cells] = True
    else:
        nx, ny = grid.cells
        if 2 * margin_cells < nx and 2 * margin_cells < ny:
            mask[margin_cells : nx - margin_cells, margin_cells : ny - margin_cells] = True
    return mask


def collar_mask(grid: Grid, width_cells: int) -> np.ndarray:
    """Cells within ``width_cells`` of the boundary (complement of the interior)."""
    return ~interior_mask(grid, width_cells)


def random_bump(grid: Grid, center, radius: float, height: float, profile: str = "cosine") -> np.ndarray:
    """Compactly supported bump on the grid.

    ``cosine`` gives the C^1 profile (height/2)(1 + cos(pi d/r)) inside the
    ball; ``indicator`` gives the flat-top version.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if height < 0:
        raise ValueError("height must be nonnegative")
    d = grid.distance_from(center)
    inside = d < radius
    out = grid.zeros()
    if profile == "cosine":
        out[inside] = 0.5 * height * (1.0 + np.cos(np.pi * d[inside] / radius))
    elif profile == "indicator":
        out[inside] = height
    else:
        raise ValueError(f"unknown bump profile {profile!r}")
    return out
