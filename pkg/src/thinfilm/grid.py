"""Uniform vertex grid on (-l, l) and even-reflection finite differences.

Both boundary conditions ``u_x = u_xxx = 0`` are realised by reflecting the
nodal values evenly about the end nodes, ``u[-j] = u[j]`` and
``u[N + j] = u[N - j]``. An even extension has every odd derivative equal to
zero at the reflection point, so the central stencils below see the boundary
conditions without any special rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import DomainError, ShapeError


@dataclass(frozen=True)
class Grid1D:
    half_length: float
    n_cells: int

    def __post_init__(self):
        if not np.isfinite(self.half_length) or self.half_length <= 0:
            raise DomainError(f"half_length must be positive, got {self.half_length!r}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise DomainError(f"n_cells must be an integer >= 8, got {self.n_cells!r}")
        object.__setattr__(self, "half_length", float(self.half_length))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def spacing(self):
        return 2.0 * self.half_length / self.n_cells

    @property
    def n_nodes(self):
        return self.n_cells + 1

    @cached_property
    def nodes(self):
        x = -self.half_length + self.spacing * np.arange(self.n_nodes)
        x[-1] = self.half_length
        x.flags.writeable = False
        return x

    @cached_property
    def faces(self):
        """Midpoints ``x_{i+1/2}``, ``i = 0 .. N-1``."""
        x = self.nodes
        f = 0.5 * (x[:-1] + x[1:])
        f.flags.writeable = False
        return f

    @cached_property
    def trapezoid_weights(self):
        w = np.full(self.n_nodes, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        w.flags.writeable = False
        return w

    def refined(self):
        """Grid with the cell count doubled on the same domain."""
        return Grid1D(self.half_length, 2 * self.n_cells)

    def check(self, heights):
        """Return ``heights`` as a float array, or raise if the length is wrong."""
        u = np.asarray(heights, dtype=float)
        if u.shape != (self.n_nodes,):
            raise ShapeError(
                f"expected {self.n_nodes} nodal values for N={self.n_cells}, got shape {u.shape}"
            )
        return u


@dataclass(frozen=True)
class FilmState:
    """Film height at the grid nodes at a given time."""

    time: float
    heights: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.array(self.heights, dtype=float)
        if u.ndim != 1:
            raise ShapeError("heights must be one-dimensional")
        if not np.all(np.isfinite(u)):
            raise DomainError("film heights must be finite")
        if not np.isfinite(self.time) or self.time < 0:
            raise DomainError(f"time must be finite and non-negative, got {self.time!r}")
        u.flags.writeable = False
        object.__setattr__(self, "heights", u)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def sample(cls, func, grid, time=0.0):
        return cls(time, func(grid.nodes))

    @property
    def min_height(self):
        return float(self.heights.min())


def extend_even(heights, k):
    """Pad ``heights`` with ``k`` reflected ghost values on each side.

    >>> extend_even([1.0, 2.0, 3.0], 1)
    array([2., 1., 2., 3., 2.])
    """
    u = np.asarray(heights, dtype=float)
    if not 1 <= k <= 4:
        raise DomainError(f"ghost width must be in 1..4, got {k}")
    if u.size <= k:
        raise ShapeError(f"need more than {k} values to reflect {k} ghosts")
    return np.concatenate([u[k:0:-1], u, u[-2:-k - 2:-1]])


def derivative(heights, order, grid):
    """Nodal derivative of the given order by second-order central differences.

    Orders 1 and 2 use three-point stencils, orders 3 and 4 five-point
    stencils, all evaluated on the even extension.
    """
    u = grid.check(heights)
    h = grid.spacing
    if order == 1:
        e = extend_even(u, 1)
        return (e[2:] - e[:-2]) / (2.0 * h)
    if order == 2:
        e = extend_even(u, 1)
        return ((e[2:] - e[1:-1]) - (e[1:-1] - e[:-2])) / h**2
    if order == 3:
        e = extend_even(u, 2)
        return ((e[4:] - e[:-4]) - 2.0 * (e[3:-1] - e[1:-3])) / (2.0 * h**3)
    if order == 4:
        e = extend_even(u, 2)
        return ((e[4:] + e[:-4]) - 4.0 * (e[3:-1] + e[1:-3]) + 6.0 * e[2:-2]) / h**4
    raise DomainError(f"derivative order must be 1..4, got {order!r}")


def face_third_derivative(heights, grid):
    """Third derivative at the N faces ``x_{i+1/2}``.

    ``(u[i+2] - 3 u[i+1] + 3 u[i] - u[i-1]) / h^3``, grouped so that a
    constant input gives exactly zero.
    """
    u = grid.check(heights)
    e = extend_even(u, 1)
    # e[j] is u[j-1]
    return ((e[3:] - e[:-3]) - 3.0 * (e[2:-1] - e[1:-2])) / grid.spacing**3


def face_difference(heights, grid):
    """First derivative at the faces, ``(u[i+1] - u[i]) / h``."""
    u = grid.check(heights)
    return np.diff(u) / grid.spacing


def face_average(heights, grid):
    u = grid.check(heights)
    return 0.5 * (u[:-1] + u[1:])
