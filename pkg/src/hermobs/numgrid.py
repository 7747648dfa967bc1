"""Uniform cell-centred grids, quadrature, rasterized sets and L2 products.

Every function on R^m (m = d for the Hermite flows, m = 2d for functions
on C^d) is carried as samples at cell centres

    x_j = -L + (j + 1/2) h,    h = 2L / n,

so that no node sits at the origin and the node set is symmetric. Sums of
two cell centres land on the *vertex* lattice ``h Z``; :meth:`UniformGrid.dual`
returns the grid on that lattice (it has ``n + 1`` nodes per axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

MAX_DIM = 4


class GridError(ValueError):
    """Unusable discretization or mismatched grids."""


@dataclass(frozen=True)
class UniformGrid:
    dim: int
    half_extent: float
    points_per_axis: int

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise GridError(f"dimension must be in 1..{MAX_DIM}, got {self.dim}")
        if not self.half_extent > 0:
            raise GridError("half_extent must be positive")
        if self.points_per_axis < 1:
            raise GridError("points_per_axis must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def window_volume(self) -> float:
        return (2.0 * self.half_extent) ** self.dim

    @property
    def is_vertex_lattice(self) -> bool:
        """True when the nodes are integer multiples of the spacing."""
        return self.points_per_axis % 2 == 1

    def axis(self) -> np.ndarray:
        h = self.spacing
        return -self.half_extent + (np.arange(self.points_per_axis) + 0.5) * h

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis (``indexing='ij'``)."""
        ax = self.axis()
        out = []
        for k in range(self.dim):
            shape = [1] * self.dim
            shape[k] = self.points_per_axis
            out.append(ax.reshape(shape))
        return out

    def radius_squared(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for c in self.coords():
            r2 = r2 + c**2
        return r2

    def points(self) -> np.ndarray:
        """All nodes as an ``(n**m, m)`` array in row-major order."""
        mesh = np.meshgrid(*([self.axis()] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def dual(self) -> "UniformGrid":
        """The grid on the complementary lattice covering the same window.

        Cell-centred grids with even ``n`` map to vertex grids with ``n + 1``
        nodes, and back.
        """
        h = self.spacing
        if self.is_vertex_lattice:
            return UniformGrid(self.dim, self.half_extent - h / 2, self.points_per_axis - 1)
        return UniformGrid(self.dim, self.half_extent + h / 2, self.points_per_axis + 1)

    def scaled(self, factor: float) -> "UniformGrid":
        """Same node count, coordinates multiplied by ``factor > 0``."""
        if not factor > 0:
            raise GridError("scale factor must be positive")
        return UniformGrid(self.dim, self.half_extent * factor, self.points_per_axis)

    def refined(self) -> "UniformGrid":
        return UniformGrid(self.dim, self.half_extent, 2 * self.points_per_axis)

    def origin_offset(self) -> float:
        """Position of node 0 in units of the spacing."""
        return -self.half_extent / self.spacing + 0.5


def make_uniform_grid(dim: int, half_extent: float, points_per_axis: int) -> UniformGrid:
    """Build a cell-centred grid on ``[-L, L]**dim``.

    Raises
    ------
    GridError
        If ``points_per_axis`` is odd or below 4.
    """
    if points_per_axis < 4 or points_per_axis % 2:
        raise GridError(f"points_per_axis must be even and >= 4, got {points_per_axis}")
    return UniformGrid(int(dim), float(half_extent), int(points_per_axis))


def same_lattice(a: UniformGrid, b: UniformGrid) -> bool:
    return a.dim == b.dim and math.isclose(a.spacing, b.spacing, rel_tol=1e-12)


def check_same_grid(a: UniformGrid, b: UniformGrid) -> None:
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {vals.size}")
        vals = vals.reshape(self.grid.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: UniformGrid, fn) -> "GridFunction":
        return cls(grid, fn(*grid.coords()) * np.ones(grid.shape))

    @classmethod
    def zeros(cls, grid: UniformGrid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        check_same_grid(self.grid, other.grid)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        check_same_grid(self.grid, other.grid)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar) -> "GridFunction":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return norm(self)

    def masked(self, mask: "IndicatorSet") -> "GridFunction":
        check_same_grid(self.grid, mask.grid)
        return self.with_values(np.where(mask.mask, self.values, 0))


def inner_product(f: GridFunction, g: GridFunction) -> complex:
    """Cell-volume weighted ``sum f * conj(g)``, linear in the first slot."""
    check_same_grid(f.grid, g.grid)
    return complex(np.sum(f.values * np.conj(g.values)) * f.grid.cell_volume)


def norm(f: GridFunction) -> float:
    return math.sqrt(float(np.sum(np.abs(f.values) ** 2)) * f.grid.cell_volume)


def norm_on(f: GridFunction, mask: "IndicatorSet") -> float:
    """L2 norm of ``f`` restricted to ``mask``."""
    check_same_grid(f.grid, mask.grid)
    return math.sqrt(float(np.sum(np.abs(f.values[mask.mask]) ** 2)) * f.grid.cell_volume)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, fn) -> complex:
        """``∫ fn(x) exp(-x^2) dx``."""
        return np.sum(self.weights * fn(self.nodes))


def gauss_hermite_rule(n: int) -> QuadratureRule:
    """Gauss-Hermite rule exact for ``p(x) exp(-x^2)``, ``deg p <= 2n - 1``."""
    if not 1 <= n <= 200:
        raise GridError(f"Gauss-Hermite order must be in 1..200, got {n}")
    x, w = np.polynomial.hermite.hermgauss(n)
    return QuadratureRule(x, w, 2 * n - 1)


# --------------------------------------------------------------------------
# rasterized sets


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class SetUnion:
    parts: tuple


@dataclass(frozen=True)
class Complement:
    """Complement of ``inner`` within the grid window."""

    inner: object


Shape = Union[Box, Ball, SetUnion, Complement]


@dataclass(frozen=True, eq=False)
class IndicatorSet:
    grid: UniformGrid
    mask: np.ndarray
    count: int = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.size != self.grid.size:
            raise GridError(f"mask has {m.size} cells, grid has {self.grid.size}")
        m = m.reshape(self.grid.shape)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "count", int(np.count_nonzero(m)))

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    def complement(self) -> "IndicatorSet":
        return IndicatorSet(self.grid, ~self.mask)

    def union(self, other: "IndicatorSet") -> "IndicatorSet":
        check_same_grid(self.grid, other.grid)
        return IndicatorSet(self.grid, self.mask | other.mask)

    def intersection(self, other: "IndicatorSet") -> "IndicatorSet":
        check_same_grid(self.grid, other.grid)
        return IndicatorSet(self.grid, self.mask & other.mask)

    def issubset(self, other: "IndicatorSet") -> bool:
        check_same_grid(self.grid, other.grid)
        return not np.any(self.mask & ~other.mask)

    def shifted(self, offset: Sequence[int]) -> "IndicatorSet":
        """Translate by ``offset`` cells per axis; cells may not leave the window."""
        new = shift_array(self.mask, offset, fill=False)
        if int(np.count_nonzero(new)) != self.count:
            raise GridError(f"translation by {tuple(offset)} cells leaves the window")
        return IndicatorSet(self.grid, new)

    def indicator(self) -> GridFunction:
        return GridFunction(self.grid, self.mask.astype(complex))


def shift_array(a: np.ndarray, offset: Sequence[int], fill=0) -> np.ndarray:
    """``out[i] = a[i - offset]`` with ``fill`` outside (no wrap-around)."""
    out = np.full_like(a, fill)
    src, dst = [], []
    for k, n in zip(offset, a.shape):
        k = int(k)
        if abs(k) >= n:
            return out
        if k >= 0:
            src.append(slice(0, n - k))
            dst.append(slice(k, n))
        else:
            src.append(slice(-k, n))
            dst.append(slice(0, n + k))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _inside_window(shape, L: float, dim: int) -> bool:
    tol = 1e-12 * L
    if isinstance(shape, Box):
        return all(-L - tol <= lo and hi <= L + tol for lo, hi in zip(shape.lo, shape.hi))
    if isinstance(shape, Ball):
        return all(abs(c) + shape.radius <= L + tol for c in shape.center)
    if isinstance(shape, SetUnion):
        return all(_inside_window(p, L, dim) for p in shape.parts)
    if isinstance(shape, Complement):
        return _inside_window(shape.inner, L, dim)
    raise TypeError(f"unknown shape {shape!r}")


def _shape_mask(shape, grid: UniformGrid) -> np.ndarray:
    coords = grid.coords()
    if isinstance(shape, Box):
        if len(shape.lo) != grid.dim or len(shape.hi) != grid.dim:
            raise GridError("box dimension does not match grid")
        m = np.ones(grid.shape, dtype=bool)
        for c, lo, hi in zip(coords, shape.lo, shape.hi):
            m = m & (c >= lo) & (c <= hi)
        return m
    if isinstance(shape, Ball):
        if len(shape.center) != grid.dim:
            raise GridError("ball dimension does not match grid")
        r2 = np.zeros(grid.shape)
        for c, c0 in zip(coords, shape.center):
            r2 = r2 + (c - c0) ** 2
        return r2 <= shape.radius**2
    if isinstance(shape, SetUnion):
        m = np.zeros(grid.shape, dtype=bool)
        for p in shape.parts:
            m = m | _shape_mask(p, grid)
        return m
    if isinstance(shape, Complement):
        return ~_shape_mask(shape.inner, grid)
    raise TypeError(f"unknown shape {shape!r}")


def rasterize_set(shape: Shape, grid: UniformGrid) -> IndicatorSet:
    """Mark the cells whose centre lies in ``shape``.

    Raises
    ------
    GridError
        If the shape pokes out of the grid window or covers no cell.
    """
    if not _inside_window(shape, grid.half_extent, grid.dim):
        raise GridError(f"shape {shape!r} exceeds the window [-{grid.half_extent}, {grid.half_extent}]")
    s = IndicatorSet(grid, _shape_mask(shape, grid))
    if s.count == 0:
        raise GridError("shape covers no grid cell; sets must have positive measure")
    return s


def shape_from_dict(spec) -> Shape:
    """Parse ``{"box": {"lo": .., "hi": ..}}`` style descriptions."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise GridError(f"shape must be a one-key mapping, got {spec!r}")
    (kind, body), = spec.items()
    if kind == "box":
        return Box(tuple(float(v) for v in body["lo"]), tuple(float(v) for v in body["hi"]))
    if kind == "ball":
        return Ball(tuple(float(v) for v in body["center"]), float(body["radius"]))
    if kind == "union":
        return SetUnion(tuple(shape_from_dict(p) for p in body))
    if kind == "complement":
        return Complement(shape_from_dict(body))
    raise GridError(f"unknown shape kind {kind!r}")
