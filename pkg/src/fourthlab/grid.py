"""Uniform tensor grids on an interval or box with homogeneous Neumann operators.

Boundary conditions are realized by even reflection across the boundary
nodes (ghost value ``f[-1] = f[1]``).  Combined with trapezoidal quadrature
this makes the discrete Laplacian exactly self-adjoint, so every
integration-by-parts identity used downstream holds up to round-off::

    integrate(g * laplacian(f)) == -sum_faces h * D+f * D+g == integrate(f * laplacian(g))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, PositivityError

#: Values below this are refused by negative or fractional powers.
POSITIVITY_FLOOR = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid on ``[0, L_1] x ... x [0, L_dim]``."""

    dim: int
    points: tuple[int, ...]
    extent: tuple[float, ...]

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise DomainError(f"grid dimension must be 1 or 2, got {self.dim}")
        if len(self.points) != self.dim or len(self.extent) != self.dim:
            raise DomainError("points and extent need one entry per axis")
        if any(int(p) != p or p < 4 for p in self.points):
            raise DomainError(f"need at least 4 points per axis, got {self.points}")
        if any(not (e > 0) for e in self.extent):
            raise DomainError(f"extent must be positive, got {self.extent}")
        object.__setattr__(self, "points", tuple(int(p) for p in self.points))
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))

    @classmethod
    def interval(cls, points: int, length: float = 1.0) -> "Grid":
        return cls(1, (points,), (length,))

    @classmethod
    def box(cls, points: int | Sequence[int], extent: float | Sequence[float] = 1.0) -> "Grid":
        if np.isscalar(points):
            points = (points, points)
        if np.isscalar(extent):
            extent = (extent, extent)
        return cls(2, tuple(points), tuple(extent))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / (p - 1) for e, p in zip(self.extent, self.points))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def h(self) -> float:
        """Largest spacing; the refinement parameter."""
        return max(self.spacing)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(0.0, e, p) for e, p in zip(self.extent, self.points)]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Nodal coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (half weight on boundary nodes)."""
        w = np.ones(self.shape)
        for axis, h in enumerate(self.spacing):
            wa = np.full(self.points[axis], h)
            wa[0] = wa[-1] = 0.5 * h
            shape = [1] * self.dim
            shape[axis] = -1
            w = w * wa.reshape(shape)
        return w


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a function on a grid.

    The value array is copied and frozen on construction.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        return cls(grid, np.broadcast_to(fn(*grid.coords()), grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    def is_neumann_admissible(self) -> bool:
        """True when the mirrored-ghost normal difference vanishes at every boundary node.

        With even reflection this holds for every nodal array; the check is
        kept so callers that build ghosts some other way can assert it.
        """
        tol = 10 * np.finfo(float).eps * max(1.0, float(np.abs(self.values).max()))
        for axis in range(self.grid.dim):
            padded = _mirror(self.values, axis)
            lo = np.take(padded, 2, axis=axis) - np.take(padded, 0, axis=axis)
            hi = np.take(padded, -1, axis=axis) - np.take(padded, -3, axis=axis)
            if np.abs(lo).max() > tol or np.abs(hi).max() > tol:
                return False
        return True

    def __add__(self, other):
        return Field(self.grid, self.values + _values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - _values(other))

    def __rsub__(self, other):
        return Field(self.grid, _values(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * _values(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / _values(other))

    def __neg__(self):
        return Field(self.grid, -self.values)


def _values(x):
    return x.values if isinstance(x, Field) else x


def _mirror(a: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    return np.pad(a, pad, mode="reflect")


# -- array kernels -------------------------------------------------------------
# Shared by the Field-level API and by the solvers, which work on raw arrays.


def lap(a: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(a, dtype=float)
    for axis, h in enumerate(grid.spacing):
        p = _mirror(a, axis)
        n = a.shape[axis]
        left = np.take(p, range(0, n), axis=axis)
        right = np.take(p, range(2, n + 2), axis=axis)
        out += (left - 2.0 * a + right) / (h * h)
    return out


def grad(a: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Centered first differences; the normal component vanishes on the boundary."""
    comps = []
    for axis, h in enumerate(grid.spacing):
        p = _mirror(a, axis)
        n = a.shape[axis]
        left = np.take(p, range(0, n), axis=axis)
        right = np.take(p, range(2, n + 2), axis=axis)
        comps.append((right - left) / (2.0 * h))
    return comps


def hessian(a: np.ndarray, grid: Grid) -> list[list[np.ndarray]]:
    """Second differences; mixed entries by centered cross-differences on mirrored ghosts."""
    d = grid.dim
    H = [[None] * d for _ in range(d)]
    for i, hi in enumerate(grid.spacing):
        p = _mirror(a, i)
        n = a.shape[i]
        H[i][i] = (np.take(p, range(0, n), axis=i) - 2.0 * a + np.take(p, range(2, n + 2), axis=i)) / (hi * hi)
    if d == 2:
        hx, hy = grid.spacing
        p = np.pad(a, 1, mode="reflect")
        H[0][1] = H[1][0] = (p[2:, 2:] - p[2:, :-2] - p[:-2, 2:] + p[:-2, :-2]) / (4.0 * hx * hy)
    return H


def integral(a: np.ndarray, grid: Grid) -> float:
    return float(np.sum(grid.weights() * a))


def face_diffs(a: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Forward differences ``(a[i+1] - a[i]) / h`` on the faces of each axis."""
    return [np.diff(a, axis=axis) / h for axis, h in enumerate(grid.spacing)]


def face_weights(grid: Grid) -> list[np.ndarray]:
    """Quadrature weights for face-centred quantities, one array per axis.

    Chosen so that ``sum(face_weights * D+f * D+g) == -integral(g * lap(f))``.
    """
    w = grid.weights()
    out = []
    for axis, h in enumerate(grid.spacing):
        n = grid.points[axis]
        # strip the axis-direction weight and replace it by h per face
        wa = np.full(n, h)
        wa[0] = wa[-1] = 0.5 * h
        shape = [1] * grid.dim
        shape[axis] = -1
        other = w / wa.reshape(shape)
        out.append(np.take(other, range(n - 1), axis=axis) * h)
    return out


def dirichlet_form(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Discrete ``int grad a . grad b`` on faces; equals ``-integral(b * lap(a))`` exactly."""
    return float(sum(np.sum(w * da * db) for w, da, db in zip(face_weights(grid), face_diffs(a, grid), face_diffs(b, grid))))


def check_power(a: np.ndarray, s: float) -> None:
    if s < 1 and np.any(a < POSITIVITY_FLOOR):
        raise PositivityError(
            f"power {s} needs values above {POSITIVITY_FLOOR:g}; min value is {float(np.min(a)):.3e}"
        )


def power(a: np.ndarray, s: float) -> np.ndarray:
    check_power(a, s)
    if s == 1:
        return np.array(a, dtype=float)
    return np.power(a, s)


# -- sparse operators ----------------------------------------------------------


def _lap1d_matrix(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / (h * h)


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of :func:`lap` acting on C-ordered flattened values."""
    mats = [_lap1d_matrix(n, h) for n, h in zip(grid.points, grid.spacing)]
    if grid.dim == 1:
        return mats[0].tocsr()
    nx, ny = grid.points
    return (sp.kron(mats[0], sp.identity(ny)) + sp.kron(sp.identity(nx), mats[1])).tocsr()


def _diff1d_matrix(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr") / h


def face_difference_matrices(grid: Grid) -> list[sp.csr_matrix]:
    """Matrices mapping flattened nodal values to flattened forward face differences per axis."""
    if grid.dim == 1:
        return [_diff1d_matrix(grid.points[0], grid.spacing[0])]
    nx, ny = grid.points
    hx, hy = grid.spacing
    return [
        sp.kron(_diff1d_matrix(nx, hx), sp.identity(ny)).tocsr(),
        sp.kron(sp.identity(nx), _diff1d_matrix(ny, hy)).tocsr(),
    ]


def face_average_matrices(grid: Grid) -> list[sp.csr_matrix]:
    """Matrices mapping nodal values to the arithmetic mean on each face."""

    def avg(n):
        return sp.diags([np.full(n - 1, 0.5), np.full(n - 1, 0.5)], [0, 1], shape=(n - 1, n), format="csr")

    if grid.dim == 1:
        return [avg(grid.points[0])]
    nx, ny = grid.points
    return [sp.kron(avg(nx), sp.identity(ny)).tocsr(), sp.kron(sp.identity(nx), avg(ny)).tocsr()]


# -- Field-level API -------------------------------------------------------------


def laplacian_neumann(f: Field) -> Field:
    """Nodal Laplacian with mirrored ghosts (3-point stencil in 1D, 5-point in 2D)."""
    return Field(f.grid, lap(f.values, f.grid))


def gradient_sq(f: Field) -> Field:
    """Nodal ``|grad f|^2`` from centered differences."""
    return Field(f.grid, sum(g * g for g in grad(f.values, f.grid)))


def hessian_sq(f: Field) -> Field:
    """Nodal Frobenius norm squared of the discrete Hessian."""
    H = hessian(f.values, f.grid)
    return Field(f.grid, sum(H[i][j] ** 2 for i in range(f.grid.dim) for j in range(f.grid.dim)))


def integrate(f: Field) -> float:
    """Trapezoidal quadrature over the grid."""
    return integral(f.values, f.grid)


def power_field(f: Field, s: float) -> Field:
    """Nodal ``f**s``; powers below one refuse values under the positivity floor."""
    return Field(f.grid, power(f.values, s))
