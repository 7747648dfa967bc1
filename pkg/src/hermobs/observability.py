"""Masked propagators ``1_Omega S_t 1_E``: kernels, norms and certified constants.

The certified constant comes from the elementary criterion: if
``||1_Omega S 1_E|| = sigma < 1`` then for every ``f``

    ||f||^2 <= 2((1 - sigma)^-1 + 1)^2 (||f||^2_{E^c} + ||S f||^2_{Omega^c}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numgrid import GridError, GridFunction, IndicatorSet, check_same_grid, norm
from .params import PropagatorParams
from .twisted import (
    apply_kernel_fast,
    kernel_entries,
    propagate_special_hermite,
    schrodinger_kernel,
)

SIGMA_VOID = 1e-9
ADJOINT_TOL = 1e-10
MAX_ITER = 10000
DENSE_CELL_LIMIT = 64 * 64
MEMORY_CAP_BYTES = 1 << 30


class CertificateVoid(ValueError):
    """The masked propagator has norm too close to 1 to certify anything."""


class ConvergenceError(RuntimeError):
    pass


class AdjointError(ValueError):
    pass


def certified_constant(sigma: float) -> float:
    """``2((1 - sigma)^-1 + 1)^2``; raises :class:`CertificateVoid` unless ``0 <= sigma < 1``."""
    if not 0 <= sigma < 1:
        raise CertificateVoid(f"operator norm {sigma} is not below 1")
    return 2.0 * (1.0 / (1.0 - sigma) + 1.0) ** 2


def _weighted_dot(a: np.ndarray, b: np.ndarray, weight: float) -> complex:
    return complex(np.vdot(b, a)) * weight


def adjoint_test(apply, adjoint, shape, weight: float = 1.0, seed: int = 0, probes: int = 3) -> float:
    """Largest relative defect ``|<Af, g> - <f, A*g>| / (||f|| ||g||)`` on random probes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        f = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        lhs = _weighted_dot(apply(f), g, weight)
        rhs = _weighted_dot(f, adjoint(g), weight)
        scale = math.sqrt(_weighted_dot(f, f, weight).real * _weighted_dot(g, g, weight).real)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def top_singular_value(
    apply,
    adjoint,
    start: np.ndarray,
    tol: float = 1e-10,
    weight: float = 1.0,
    max_iter: int = MAX_ITER,
    check_adjoint: bool = True,
) -> float:
    """Largest singular value by power iteration on ``adjoint(apply(.))``.

    ``apply`` and ``adjoint`` act on arrays shaped like ``start``; inner
    products carry the quadrature ``weight``. Iteration stops once successive
    estimates differ by less than ``tol``.

    Raises
    ------
    AdjointError
        If the pair fails the adjoint test.
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``.
    """
    start = np.asarray(start, dtype=complex)
    if check_adjoint:
        defect = adjoint_test(apply, adjoint, start.shape, weight)
        if defect > ADJOINT_TOL:
            raise AdjointError(f"adjoint test failed with relative defect {defect:.2e}")
    v = start / math.sqrt(_weighted_dot(start, start, weight).real)
    prev = -1.0
    for _ in range(max_iter):
        av = apply(v)
        sigma = math.sqrt(_weighted_dot(av, av, weight).real)
        if abs(sigma - prev) < tol:
            return sigma
        prev = sigma
        w = adjoint(av)
        nw = math.sqrt(_weighted_dot(w, w, weight).real)
        if nw == 0:
            return 0.0
        v = w / nw
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


# --------------------------------------------------------------------------
# dense kernels


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Quadrature-weighted entries ``K(z, w) h^{2d}`` for ``z`` in Omega, ``w`` in E."""

    E: IndicatorSet
    Omega: IndicatorSet
    params: PropagatorParams
    matrix: np.ndarray
    entry_modulus: float

    @property
    def rows(self) -> np.ndarray:
        return np.flatnonzero(self.Omega.mask)

    @property
    def cols(self) -> np.ndarray:
        return np.flatnonzero(self.E.mask)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``1_Omega S 1_E`` on a full grid array."""
        out = np.zeros(self.Omega.grid.size, dtype=complex)
        out[self.rows] = self.matrix @ np.asarray(values).ravel()[self.cols]
        return out.reshape(self.Omega.grid.shape)

    def adjoint(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.E.grid.size, dtype=complex)
        out[self.cols] = self.matrix.conj().T @ np.asarray(values).ravel()[self.rows]
        return out.reshape(self.E.grid.shape)


def _require_sets(E: IndicatorSet, Omega: IndicatorSet) -> None:
    check_same_grid(E.grid, Omega.grid)
    if E.count == 0 or Omega.count == 0:
        raise GridError("E and Omega must have positive measure")


def assemble_kernel(
    E: IndicatorSet, Omega: IndicatorSet, p: PropagatorParams, memory_cap: int = MEMORY_CAP_BYTES
) -> KernelMatrix:
    """Dense matrix of ``1_Omega S_t 1_E`` in cell coordinates.

    Raises
    ------
    GridError
        Empty sets, mismatched grids, or a matrix above ``memory_cap`` bytes.
    """
    _require_sets(E, Omega)
    kernel = schrodinger_kernel(p)
    nbytes = 16 * E.count * Omega.count
    if nbytes > memory_cap:
        raise GridError(f"kernel matrix needs {nbytes} bytes (cap {memory_cap}); use matrix-free mode")
    pts = E.grid.points()
    z = pts[np.flatnonzero(Omega.mask)]
    w = pts[np.flatnonzero(E.mask)]
    vol = E.grid.cell_volume
    mat = kernel_entries(kernel, z, w) * vol
    return KernelMatrix(E, Omega, p, mat, kernel.modulus * vol)


def hs_norm(K: KernelMatrix) -> tuple[float, float]:
    """Numeric Hilbert-Schmidt norm and the closed form ``|c_d||lam/sin lam t|^d sqrt(|Omega||E|)``."""
    numeric = float(np.linalg.norm(K.matrix))
    closed = hs_closed_form(K.E, K.Omega, K.params)
    return numeric, closed


def hs_closed_form(E: IndicatorSet, Omega: IndicatorSet, p: PropagatorParams) -> float:
    return schrodinger_kernel(p).modulus * math.sqrt(E.measure * Omega.measure)


def hs_numeric_matrix_free(E: IndicatorSet, Omega: IndicatorSet, p: PropagatorParams) -> float:
    """Pixel sum of the constant squared modulus (no matrix needed)."""
    m = schrodinger_kernel(p).modulus * E.grid.cell_volume
    return m * math.sqrt(E.count * Omega.count)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class ObservabilityReport:
    sigma_max: float
    hs_norm: float | None
    hs_closed_form: float | None
    certified_constant: float
    ratios: tuple
    params: dict
    measures: dict
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "sigma_max": self.sigma_max,
            "hs_norm": self.hs_norm,
            "hs_closed_form": self.hs_closed_form,
            "certified_constant": self.certified_constant,
            "ratios": list(self.ratios),
            "params": self.params,
            "measures": self.measures,
            **self.extra,
        }


GRID_CAVEAT = (
    "sigma_max is the norm of the discretized operator on this grid; "
    "it is evidence for, not a proof of, the continuum bound"
)


def observability_ratio(u0: GridFunction, ut: GridFunction, A: IndicatorSet, B: IndicatorSet) -> float:
    """``||u0||^2 / (||u0||^2_{A^c} + ||ut||^2_{B^c})`` (inf if the denominator vanishes)."""
    num = norm(u0) ** 2
    den = float(np.sum(np.abs(u0.values[~A.mask]) ** 2) + np.sum(np.abs(ut.values[~B.mask]) ** 2))
    den *= u0.grid.cell_volume
    return math.inf if den == 0 else num / den


def gaussian_mixture_samples(
    grid, count: int, seed: int, components=(1, 3), centre_range: float = 1.0, width_range=(0.8, 1.8)
) -> tuple[list[GridFunction], list[dict]]:
    """Seeded complex Gaussian mixtures; returns the samples and their parameters."""
    rng = np.random.default_rng(seed)
    coords = grid.coords()
    samples, specs = [], []
    for _ in range(count):
        k = int(rng.integers(components[0], components[1] + 1))
        vals = np.zeros(grid.shape, dtype=complex)
        comps = []
        for _ in range(k):
            c = rng.uniform(-centre_range, centre_range, grid.dim)
            s = float(rng.uniform(*width_range))
            amp = complex(rng.standard_normal(), rng.standard_normal())
            r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
            vals = vals + amp * np.exp(-r2 / (2 * s * s))
            comps.append({"centre": c.tolist(), "width": s, "amplitude": [amp.real, amp.imag]})
        samples.append(GridFunction(grid, vals))
        specs.append({"components": comps})
    return samples, specs


def _mask_start(A: IndicatorSet) -> np.ndarray:
    return A.mask.astype(complex)


def masked_sigma(E: IndicatorSet, Omega: IndicatorSet, p: PropagatorParams, mode: str = "auto", tol: float = 1e-10):
    """``(sigma, details)`` for ``1_Omega S_t 1_E``, dense when the sets are small."""
    _require_sets(E, Omega)
    if mode == "auto":
        mode = "dense" if max(E.count, Omega.count) <= DENSE_CELL_LIMIT else "matrix_free"
    vol = E.grid.cell_volume
    details: dict = {"mode": mode}
    if mode == "dense":
        K = assemble_kernel(E, Omega, p)
        apply, adjoint = K.apply, K.adjoint
        details["hs_norm"], details["hs_closed_form"] = hs_norm(K)
        if K.matrix.size <= 4096 * 4096:
            details["sigma_svd"] = float(np.linalg.svd(K.matrix, compute_uv=False)[0])
    elif mode == "matrix_free":
        kernel = schrodinger_kernel(p)
        back = schrodinger_kernel(p.at_time(-p.t))
        grid = E.grid

        def apply(v):
            f = GridFunction(grid, np.where(E.mask, v, 0))
            return np.where(Omega.mask, apply_kernel_fast(f, kernel), 0)

        def adjoint(v):
            f = GridFunction(grid, np.where(Omega.mask, v, 0))
            return np.where(E.mask, apply_kernel_fast(f, back), 0)

        details["hs_norm"] = hs_numeric_matrix_free(E, Omega, p)
        details["hs_closed_form"] = hs_closed_form(E, Omega, p)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sigma = top_singular_value(apply, adjoint, _mask_start(E), tol=tol, weight=vol)
    details["apply"], details["adjoint"] = apply, adjoint
    return sigma, details


def special_observability_experiment(
    samples: list[GridFunction],
    p: PropagatorParams,
    E: IndicatorSet,
    Omega: IndicatorSet,
    mode: str = "auto",
    tol: float = 1e-10,
) -> ObservabilityReport:
    """Certify ``||u0||^2 <= C (||u0||^2_{E^c} + ||S_t u0||^2_{Omega^c})`` on the samples.

    Raises
    ------
    ResonanceError
        If ``lam t`` lies in ``pi*Z``.
    CertificateVoid
        If ``sigma >= 1 - 1e-9``.
    AssertionError
        If a sample violates the certified inequality or ``sigma > hs_norm``.
    """
    p.require_special_valid()
    sigma, det = masked_sigma(E, Omega, p, mode, tol)
    if sigma >= 1 - SIGMA_VOID:
        raise CertificateVoid(f"sigma = {sigma} leaves no margin below 1")
    C = certified_constant(sigma)
    c0 = 1.0 - sigma
    hs = det["hs_norm"]
    assert sigma <= hs * (1 + 1e-12), "operator norm exceeds Hilbert-Schmidt norm"

    ratios, chain, unitarity = [], [], []
    for u0 in samples:
        check_same_grid(u0.grid, E.grid)
        ut = propagate_special_hermite(u0, p, guard=False)
        r = observability_ratio(u0, ut, E, Omega)
        assert r <= C, f"sample ratio {r} exceeds certified constant {C}"
        ratios.append(r)
        vol = u0.grid.cell_volume
        n0 = norm(u0)
        out_e = math.sqrt(float(np.sum(np.abs(u0.values[~E.mask]) ** 2)) * vol)
        out_o = math.sqrt(float(np.sum(np.abs(ut.values[~Omega.mask]) ** 2)) * vol)
        # linear form of the criterion: ||f|| <= C0^-1 ||1_{Om^c} S f|| + (C0^-1 + 1)||1_{E^c} f||
        linear = out_o / c0 + (1 / c0 + 1) * out_e
        chain.append({"norm": n0, "linear_bound": linear, "holds": bool(n0 <= linear * (1 + 1e-12))})
        unitarity.append(norm(ut) / n0)

    # E-supported case: (rho - C0') ||f|| <= ||1_{Om^c} S f|| with rho the discrete
    # norm ratio ||S f|| / ||f||, which equals 1 in the continuum
    e_case = []
    for u0 in samples[: min(5, len(samples))]:
        f = u0.masked(E)
        nf = norm(f)
        if nf == 0:
            continue
        Pf = det["apply"](f.values)
        nPf = math.sqrt(float(np.sum(np.abs(Pf) ** 2)) * f.grid.cell_volume)
        sf = propagate_special_hermite(f, p, guard=False)
        rho = norm(sf) / nf
        out_o = math.sqrt(float(np.sum(np.abs(sf.values[~Omega.mask]) ** 2)) * f.grid.cell_volume)
        e_case.append(
            {
                "contraction": nPf / nf,
                "strict_contraction": bool(nPf < nf),
                "discrete_unitarity": rho,
                "bound_holds": bool((rho - sigma) * nf <= out_o * (1 + 1e-12)),
            }
        )

    extra = {
        "mode": det["mode"],
        "C0": c0,
        "E_supported_constant": c0**-2,
        "criterion_chain": chain,
        "E_supported_case": e_case,
        "discrete_unitarity": unitarity,
        "caveat": GRID_CAVEAT,
    }
    if "sigma_svd" in det:
        extra["sigma_svd"] = det["sigma_svd"]
    return ObservabilityReport(
        sigma_max=sigma,
        hs_norm=hs,
        hs_closed_form=det["hs_closed_form"],
        certified_constant=C,
        ratios=tuple(ratios),
        params=p.as_dict(),
        measures={"E": E.measure, "Omega": Omega.measure},
        extra=extra,
    )
