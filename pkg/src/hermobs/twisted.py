"""Twisted convolution and translation on C^d, and the special Hermite flow.

Functions on C^d live on 2d-dimensional real grids with axes ordered
``(x_1, .., x_d, y_1, .., y_d)`` for ``z = x + i y``, so that

    Im(z . conj(w)) = sum_j (y_j u_j - x_j v_j),     w = u + i v.

A cell-centred grid with even ``n`` is not closed under ``z - w``: differences
of cell centres are vertex-lattice points. :func:`twisted_convolve` therefore
returns its result on the lattice ``lattice(g) + lattice(h)``, which is the
grid of ``g`` or its :meth:`~hermobs.numgrid.UniformGrid.dual`. The kernel
``p^lam_{it}`` is analytic, so the flow :func:`propagate_special_hermite` maps
a grid to itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numgrid import GridError, GridFunction, UniformGrid, norm, same_lattice, shift_array
from .params import PropagatorParams

SUPPORT_GUARD = 1e-8
ESCAPE_TOL = 1e-10
MAX_CHUNK_ELEMENTS = 2**24


class SupportError(GridError):
    """Data reaches the window edge, so zero padding would corrupt the result."""


def complex_dim(grid: UniformGrid) -> int:
    if grid.dim % 2:
        raise GridError(f"functions on C^d need an even real dimension, got {grid.dim}")
    return grid.dim // 2


def im_z_wbar(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``Im(z . conj(w))`` for real coordinate arrays of shape ``(..., 2d)``."""
    d = z.shape[-1] // 2
    x, y = z[..., :d], z[..., d:]
    u, v = w[..., :d], w[..., d:]
    return np.sum(y * u - x * v, axis=-1)


def support_guard(f: GridFunction, what: str = "input") -> None:
    """Mass outside the inner 3/4 of the window must be below ``SUPPORT_GUARD``."""
    g = f.grid
    inner = np.ones(g.shape, dtype=bool)
    for c in g.coords():
        inner = inner & (np.abs(c) <= 0.75 * g.half_extent)
    total = float(np.sum(np.abs(f.values) ** 2))
    if total == 0:
        return
    outside = float(np.sum(np.abs(f.values[~inner]) ** 2))
    if outside > SUPPORT_GUARD * total:
        raise SupportError(
            f"{what} carries a fraction {outside / total:.2e} of its mass near the window edge"
        )


def _lattice_offset(grid: UniformGrid) -> float:
    # node positions are (j + offset) * h; offset taken mod 1
    return grid.origin_offset() % 1.0


def _output_grid(g: UniformGrid, h: UniformGrid) -> UniformGrid:
    if not same_lattice(g, h):
        raise GridError("twisted convolution needs equal dimension and spacing")
    total = (_lattice_offset(g) + _lattice_offset(h)) % 1.0
    if math.isclose(total, _lattice_offset(g), abs_tol=1e-9) or math.isclose(
        abs(total - _lattice_offset(g)), 1.0, abs_tol=1e-9
    ):
        return g
    return g.dual()


def _index_shift(out: UniformGrid, g: UniformGrid, h: UniformGrid) -> int:
    # index of (z_i - w_k) in g is i - k + shift
    s = out.origin_offset() - h.origin_offset() - g.origin_offset()
    r = round(s)
    if abs(s - r) > 1e-9:
        raise GridError("lattices are incompatible")
    return int(r)


def twisted_convolve(g: GridFunction, h: GridFunction, lam: float, guard: bool = True) -> GridFunction:
    """``g x_lam h (z) = ∫ g(z - w) h(w) exp(i lam/2 Im(z . conj w)) dw`` by direct summation.

    The sum runs over every cell of ``h`` with a nonzero value; ``g`` is zero
    outside its window.
    """
    complex_dim(g.grid)
    out_grid = _output_grid(g.grid, h.grid)
    if guard:
        support_guard(g, "g")
        support_guard(h, "h")
    shift = _index_shift(out_grid, g.grid, h.grid)
    m = g.grid.dim
    d = m // 2
    z_axis = out_grid.axis()
    w_axis = h.grid.axis()
    vol = h.grid.cell_volume
    out = np.zeros(out_grid.shape, dtype=complex)
    # g embedded so that slicing realizes g(z - w) with zero padding
    pad = out_grid.points_per_axis + h.grid.points_per_axis
    n_g = g.grid.points_per_axis
    big = np.zeros((n_g + 2 * pad,) * m, dtype=complex)
    big[(slice(pad, pad + n_g),) * m] = g.values
    n_out = out_grid.points_per_axis
    for k in zip(*np.nonzero(h.values)):
        w = w_axis[list(k)]
        # phase exp(i lam/2 (y.u - x.v)) factorizes over axes
        phase = np.ones((1,) * m, dtype=complex)
        for ax in range(m):
            coef = lam / 2 * (w[ax - d] if ax >= d else -w[ax + d])
            shape = [1] * m
            shape[ax] = n_out
            phase = phase * np.exp(1j * coef * z_axis).reshape(shape)
        start = [pad + shift - kk for kk in k]
        sl = tuple(slice(s0, s0 + n_out) for s0 in start)
        out += h.values[k] * phase * big[sl]
    return GridFunction(out_grid, out * vol)


def _grid_aligned(grid: UniformGrid, w) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size != grid.dim:
        raise GridError(f"translation has {w.size} components, grid has {grid.dim}")
    k = w / grid.spacing
    kr = np.round(k)
    if np.max(np.abs(k - kr)) > 1e-9:
        raise GridError(f"translation {w.tolist()} is not a multiple of the spacing {grid.spacing}")
    return kr.astype(int)


def twisted_translate(g: GridFunction, w, lam: float) -> GridFunction:
    """``T^lam_w g(z) = exp(i lam/2 Im(w . conj z)) g(z - w)`` for grid-aligned ``w``."""
    complex_dim(g.grid)
    k = _grid_aligned(g.grid, w)
    shifted = shift_array(g.values, k, fill=0)
    total = float(np.sum(np.abs(g.values) ** 2))
    lost = total - float(np.sum(np.abs(shifted) ** 2))
    if lost > ESCAPE_TOL * total:
        raise SupportError(f"translation by {list(w)} pushes mass out of the window")
    d = g.grid.dim // 2
    wv = np.asarray(w, dtype=float).ravel()
    # Im(w . conj z) = sum_j (v_j x_j - u_j y_j)
    phase_arg = np.zeros(g.grid.shape)
    coords = g.grid.coords()
    for j in range(d):
        phase_arg = phase_arg + wv[d + j] * coords[j] - wv[j] * coords[d + j]
    return GridFunction(g.grid, np.exp(0.5j * lam * phase_arg) * shifted)


# --------------------------------------------------------------------------
# Schroedinger kernel


def cd_constant(d: int) -> complex:
    """Normalization of the kernel: modulus ``(4 pi)^-d``, phase ``i^-d``."""
    return (4 * math.pi) ** (-d) * (-1j) ** d


@dataclass(frozen=True)
class TwistedKernel:
    params: PropagatorParams
    cd: complex

    @property
    def amplitude(self) -> complex:
        lam, t, d = self.params.lam, self.params.t, self.params.d
        return self.cd * (lam / math.sin(lam * t)) ** d

    @property
    def chirp_rate(self) -> float:
        """``a`` in ``exp(i a |z|^2)``: ``lam/4 cot(lam t)``."""
        lam, t = self.params.lam, self.params.t
        return lam / 4 / math.tan(lam * t)

    @property
    def modulus(self) -> float:
        return abs(self.amplitude)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Kernel at points ``z`` of shape ``(..., 2d)``."""
        r2 = np.sum(np.asarray(z) ** 2, axis=-1)
        return self.amplitude * np.exp(1j * self.chirp_rate * r2)

    def on_grid(self, grid: UniformGrid) -> GridFunction:
        if grid.dim != 2 * self.params.d:
            raise GridError("kernel dimension does not match grid")
        return GridFunction(grid, self.amplitude * np.exp(1j * self.chirp_rate * grid.radius_squared()))


def schrodinger_kernel(p: PropagatorParams, cd: complex | None = None) -> TwistedKernel:
    """``p^lam_{it}(z) = c_d (lam / sin lam t)^d exp(i lam/4 |z|^2 cot(lam t))``.

    Raises
    ------
    ResonanceError
        If ``lam t`` lies within ``EPS_PI`` of ``pi*Z``.
    """
    p.require_special_valid()
    return TwistedKernel(p, cd_constant(p.d) if cd is None else cd)


def kernel_entries(kernel: TwistedKernel, z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``p(z - w) exp(-i lam/2 Im(z . conj w))`` for point sets ``z (N,2d)``, ``w (M,2d)``."""
    lam = kernel.params.lam
    diff = z[:, None, :] - w[None, :, :]
    return kernel(diff) * np.exp(-0.5j * lam * im_z_wbar(z[:, None, :], w[None, :, :]))


def apply_kernel_direct(f: GridFunction, kernel: TwistedKernel, out_points: np.ndarray | None = None) -> np.ndarray:
    """Reference ``sum_w K(z, w) f(w) dw`` with every pair phase evaluated directly."""
    grid = f.grid
    w_pts = grid.points()
    fv = f.values.ravel()
    nz = np.nonzero(fv)[0]
    w_pts, fv = w_pts[nz], fv[nz]
    z_pts = grid.points() if out_points is None else np.asarray(out_points, dtype=float)
    out = np.empty(len(z_pts), dtype=complex)
    rows = max(1, MAX_CHUNK_ELEMENTS // max(1, len(w_pts)))
    for s in range(0, len(z_pts), rows):
        blk = kernel_entries(kernel, z_pts[s : s + rows], w_pts)
        out[s : s + rows] = blk @ fv
    out *= grid.cell_volume
    return out.reshape(grid.shape) if out_points is None else out


def apply_kernel_fast(f: GridFunction, kernel: TwistedKernel, out_points: np.ndarray | None = None) -> np.ndarray:
    """Same sum as :func:`apply_kernel_direct`, factorized.

    ``|z - w|^2 = |z|^2 + |w|^2 - 2 Re(z.conj w)`` turns the pair phase into
    ``exp(i a|z|^2) exp(i a|w|^2) prod_axes exp(-i w_axis omega_axis(z))``
    with ``omega`` linear in ``z``, so the sum is a chain of small matrix products.
    """
    grid = f.grid
    m = grid.dim
    d = m // 2
    lam = kernel.params.lam
    a = kernel.chirp_rate
    axis = grid.axis()
    n = axis.size
    F = f.values * np.exp(1j * a * grid.radius_squared()) * grid.cell_volume
    z_pts = grid.points() if out_points is None else np.asarray(out_points, dtype=float)
    x, y = z_pts[:, :d], z_pts[:, d:]
    # coefficient of u_j: 2a x_j + lam/2 y_j ; of v_j: 2a y_j - lam/2 x_j
    omega = np.concatenate([2 * a * x + 0.5 * lam * y, 2 * a * y - 0.5 * lam * x], axis=1)
    out = np.empty(len(z_pts), dtype=complex)
    rows = max(1, MAX_CHUNK_ELEMENTS // max(1, n ** (m - 1)))
    Fm = F.reshape(-1, n)
    for s in range(0, len(z_pts), rows):
        om = omega[s : s + rows]
        E_last = np.exp(-1j * np.outer(om[:, m - 1], axis))
        T = (Fm @ E_last.T).T.reshape((len(om),) + (n,) * (m - 1))
        for ax in range(m - 2, -1, -1):
            E = np.exp(-1j * np.outer(om[:, ax], axis))
            T = np.einsum("zk,z...k->z...", E, T)
        out[s : s + rows] = T
    r2 = np.sum(z_pts**2, axis=1)
    out *= kernel.amplitude * np.exp(1j * a * r2)
    return out.reshape(grid.shape) if out_points is None else out


def propagate_special_hermite(
    u0: GridFunction,
    p: PropagatorParams,
    method: str = "fast",
    cd: complex | None = None,
    guard: bool = True,
) -> GridFunction:
    """``S^lam_t u0 = u0 x_lam p^lam_{it}`` on the grid of ``u0``.

    Raises
    ------
    ResonanceError
        If ``lam t`` lies in ``pi*Z``.
    SupportError
        If ``u0`` is not well inside the window.
    """
    if complex_dim(u0.grid) != p.d:
        raise GridError(f"grid is C^{complex_dim(u0.grid)}, parameters say d={p.d}")
    kernel = schrodinger_kernel(p, cd)
    if guard:
        support_guard(u0, "u0")
    if method == "fast":
        vals = apply_kernel_fast(u0, kernel)
    elif method == "direct":
        vals = apply_kernel_direct(u0, kernel)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridFunction(u0.grid, vals)


@dataclass(frozen=True)
class CdCalibration:
    points_per_axis: tuple
    calibrated: tuple
    reference: float
    relative_error: float

    def as_dict(self) -> dict:
        return {
            "points_per_axis": list(self.points_per_axis),
            "calibrated_cd_modulus": list(self.calibrated),
            "reference_(4pi)^-d": self.reference,
            "relative_error_finest": self.relative_error,
        }


def calibrate_cd(
    probe,
    p: PropagatorParams,
    half_extent: float = 8.0,
    sizes: tuple = (96, 128, 160),
    tolerance: float = 1e-3,
) -> CdCalibration:
    """Pick ``|c_d|`` so that ``||S_t u0|| = ||u0||`` on successively finer grids.

    ``probe`` is a callable of the grid coordinates. Raises ``ValueError`` if
    the finest calibrated value misses ``(4 pi)^-d`` by more than ``tolerance``
    (relative).
    """
    from .numgrid import make_uniform_grid

    d = p.d
    unit_phase = (-1j) ** d
    vals = []
    for n in sizes:
        grid = make_uniform_grid(2 * d, half_extent, n)
        u0 = GridFunction.from_callable(grid, probe)
        s = propagate_special_hermite(u0, p, cd=unit_phase)
        vals.append(norm(u0) / norm(s))
    ref = (4 * math.pi) ** (-d)
    err = abs(vals[-1] - ref) / ref
    if err > tolerance:
        raise ValueError(f"calibrated |c_d| = {vals[-1]} differs from (4 pi)^-{d} by {err:.2e}")
    return CdCalibration(tuple(sizes), tuple(vals), ref, err)
