"""Scaled Hermite functions and expansions in them.

``Phi_nu^lam(x) = |lam|^{d/4} Phi_nu(|lam|^{1/2} x)`` where ``Phi_nu`` is the
tensor product of normalized one-dimensional Hermite functions. They form an
orthonormal eigenbasis of ``H(lam) = -Laplacian + lam^2 |x|^2`` with
eigenvalue ``(2|nu| + d)|lam|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .numgrid import GridError, GridFunction, UniformGrid

MAX_DEGREE = 200
DEFAULT_CUTOFF = 64


def multi_indices(dim: int, cutoff: int) -> list[tuple[int, ...]]:
    """All ``nu`` with ``|nu| <= cutoff`` in graded lexicographic order.

    Degree ascending, then lexicographic ascending within a degree, e.g.
    ``(0,0), (0,1), (1,0), (0,2), (1,1), (2,0)`` for ``dim=2``.
    """
    return list(_multi_indices(dim, cutoff))


@lru_cache(maxsize=64)
def _multi_indices(dim: int, cutoff: int) -> tuple[tuple[int, ...], ...]:
    idx = [nu for nu in product(range(cutoff + 1), repeat=dim) if sum(nu) <= cutoff]
    idx.sort(key=lambda nu: (sum(nu), nu))
    return tuple(idx)


def hermite_table(kmax: int, x: np.ndarray) -> np.ndarray:
    """Rows ``Phi_0(x) .. Phi_kmax(x)`` by the normalized three-term recurrence."""
    if kmax > MAX_DEGREE:
        raise ValueError(f"degree {kmax} beyond the stability bound {MAX_DEGREE}")
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x**2)
    if kmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, kmax):
        out[k + 1] = x * math.sqrt(2.0 / (k + 1)) * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def scaled_table(kmax: int, lam: float, x: np.ndarray) -> np.ndarray:
    """One-dimensional ``Phi_k^lam(x)`` for ``k <= kmax``."""
    if lam == 0:
        raise ValueError("scale lambda must be nonzero")
    a = abs(lam)
    return a**0.25 * hermite_table(kmax, math.sqrt(a) * np.asarray(x, dtype=float))


def hermite_eval(nu, lam: float, points) -> np.ndarray:
    """Evaluate ``Phi_nu^lam`` at ``points`` of shape ``(..., d)`` (or ``(...)`` for d=1)."""
    nu = tuple(int(v) for v in np.atleast_1d(nu))
    if any(v < 0 for v in nu):
        raise ValueError("multi-index entries must be non-negative")
    pts = np.asarray(points, dtype=float)
    if len(nu) == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    if pts.shape[-1] != len(nu):
        raise ValueError(f"points have dimension {pts.shape[-1]}, multi-index {len(nu)}")
    val = np.ones(pts.shape[:-1])
    for i, k in enumerate(nu):
        val = val * scaled_table(k, lam, pts[..., i])[k]
    return val


def max_cutoff(grid: UniformGrid, lam: float) -> int:
    """Largest cutoff the grid resolves for scale ``lam`` (window and band guards)."""
    a = abs(lam)
    root = min(grid.half_extent * math.sqrt(a), math.pi / grid.spacing / math.sqrt(a)) - 4.0
    if root < 1.0:
        return -1
    return int(math.floor((root**2 - 1.0) / 2.0))


def check_grid_for_cutoff(grid: UniformGrid, lam: float, cutoff: int) -> None:
    """Window must hold the classical region plus decay, the spacing must resolve it."""
    if lam == 0:
        raise ValueError("scale lambda must be nonzero")
    if cutoff < 0 or cutoff > MAX_DEGREE:
        raise ValueError(f"cutoff must be in 0..{MAX_DEGREE}")
    a = abs(lam)
    need = (math.sqrt(2 * cutoff + 1) + 4.0)
    if grid.half_extent < need / math.sqrt(a) - 1e-12:
        raise GridError(
            f"window half-extent {grid.half_extent} too small for cutoff {cutoff} at lambda={lam} "
            f"(need {need / math.sqrt(a):.3f})"
        )
    if math.pi / grid.spacing < need * math.sqrt(a) - 1e-12:
        raise GridError(
            f"spacing {grid.spacing} too coarse for cutoff {cutoff} at lambda={lam} (aliasing)"
        )


def default_cutoff(grid: UniformGrid, lam: float) -> int:
    k = min(DEFAULT_CUTOFF, max_cutoff(grid, lam))
    if k < 0:
        raise GridError(f"grid {grid} cannot resolve any Hermite function at lambda={lam}")
    return k


@dataclass(frozen=True, eq=False)
class HermiteExpansion:
    dim: int
    scale: float
    cutoff: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.scale == 0:
            raise ValueError("scale lambda must be nonzero")
        c = np.asarray(self.coeffs, dtype=complex).ravel()
        expected = math.comb(self.cutoff + self.dim, self.dim)
        if c.size != expected:
            raise ValueError(f"expected {expected} coefficients, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def indices(self) -> list[tuple[int, ...]]:
        return multi_indices(self.dim, self.cutoff)

    @property
    def degrees(self) -> np.ndarray:
        return _degrees(self.dim, self.cutoff)

    def with_coeffs(self, coeffs) -> "HermiteExpansion":
        return HermiteExpansion(self.dim, self.scale, self.cutoff, coeffs)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def coefficient(self, nu) -> complex:
        return complex(self.coeffs[self.indices.index(tuple(nu))])

    @classmethod
    def zeros(cls, dim: int, scale: float, cutoff: int) -> "HermiteExpansion":
        return cls(dim, scale, cutoff, np.zeros(math.comb(cutoff + dim, dim), dtype=complex))

    @classmethod
    def basis(cls, nu, scale: float, cutoff: int) -> "HermiteExpansion":
        nu = tuple(nu)
        e = cls.zeros(len(nu), scale, cutoff)
        c = np.zeros_like(e.coeffs)
        c[e.indices.index(nu)] = 1.0
        return e.with_coeffs(c)


@lru_cache(maxsize=64)
def _degrees(dim: int, cutoff: int) -> np.ndarray:
    d = np.array([sum(nu) for nu in _multi_indices(dim, cutoff)], dtype=int)
    d.setflags(write=False)
    return d


def _flat_positions(dim: int, cutoff: int) -> tuple[np.ndarray, ...]:
    idx = np.array(_multi_indices(dim, cutoff), dtype=int).reshape(-1, dim)
    return tuple(idx.T)


def _contract_axes(arr: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Apply ``table`` (shape ``(p, q)``) along every axis of ``arr`` (axes of size ``q``)."""
    out = arr
    for _ in range(arr.ndim):
        # moving the contracted axis to the back cycles through all axes
        out = np.tensordot(out, table, axes=([0], [1]))
    return out


def analyze(f: GridFunction, lam: float, cutoff: int | None = None) -> HermiteExpansion:
    """Coefficients ``<f, Phi_nu^lam>`` on the grid for ``|nu| <= cutoff``."""
    grid = f.grid
    if cutoff is None:
        cutoff = default_cutoff(grid, lam)
    check_grid_for_cutoff(grid, lam, cutoff)
    table = scaled_table(cutoff, lam, grid.axis())
    full = _contract_axes(f.values, table) * grid.cell_volume
    coeffs = full[_flat_positions(grid.dim, cutoff)]
    return HermiteExpansion(grid.dim, float(lam), cutoff, coeffs)


def synthesize(c: HermiteExpansion, grid: UniformGrid) -> GridFunction:
    """Sample ``sum_nu c_nu Phi_nu^lam`` on ``grid``."""
    if grid.dim != c.dim:
        raise GridError(f"grid dimension {grid.dim} does not match expansion dimension {c.dim}")
    check_grid_for_cutoff(grid, c.scale, c.cutoff)
    table = scaled_table(c.cutoff, c.scale, grid.axis())
    full = np.zeros((c.cutoff + 1,) * c.dim, dtype=complex)
    full[_flat_positions(c.dim, c.cutoff)] = c.coeffs
    return GridFunction(grid, _contract_axes(full, table.T))


def project_eigenspace(f: GridFunction, k: int, lam: float, cutoff: int | None = None) -> GridFunction:
    """``P_k(lam) f``: projection on the eigenvalue ``(2k + d)|lam|`` eigenspace."""
    if cutoff is None:
        cutoff = max(k, default_cutoff(f.grid, lam))
    if not 0 <= k <= cutoff:
        raise ValueError(f"eigenspace index {k} outside 0..{cutoff}")
    c = analyze(f, lam, cutoff)
    return synthesize(c.with_coeffs(np.where(c.degrees == k, c.coeffs, 0)), f.grid)


def apply_hamiltonian(f: GridFunction, lam: float) -> GridFunction:
    """``H(lam) f`` with the Laplacian by FFT differentiation (decaying data only)."""
    grid = f.grid
    k = 2 * np.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    ksq = np.zeros(grid.shape)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = grid.points_per_axis
        ksq = ksq + (k**2).reshape(shape)
    lap = np.fft.ifftn(ksq * np.fft.fftn(f.values))
    return GridFunction(grid, lap + lam**2 * grid.radius_squared() * f.values)


def rescale_to_unit(f: GridFunction, lam: float) -> GridFunction:
    """``f_lam = f(. / sqrt|lam|)`` as the same samples on the stretched grid."""
    return GridFunction(f.grid.scaled(math.sqrt(abs(lam))), f.values)


def rescale_from_unit(g: GridFunction, grid: UniformGrid) -> GridFunction:
    """Inverse of :func:`rescale_to_unit`: relabel the samples onto ``grid``."""
    if g.grid.shape != grid.shape:
        raise GridError("rescaled grid does not match the target grid")
    return GridFunction(grid, g.values)
