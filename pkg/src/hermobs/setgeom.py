"""Overlap functions and the translation search on pixel sets.

For sets ``A``, ``A0`` on a grid and a cell shift ``k``,

    h_A(k) = |A| + |A0| - |A ∩ (k + A0)| = |A ∪ (k + A0)|,

so the growth ``|A ∪ (k + A0)| - |A|`` is an integer number of pixels. All
inequalities below are decided in pixel counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .numgrid import GridError, GridFunction, IndicatorSet, UniformGrid, check_same_grid, shift_array

ROUND_TOL = 1e-6
MAX_STEPS = 30


class TranslationSearchError(RuntimeError):
    """No grid-aligned translation meets the bounds (the grid is too coarse)."""


def shift_grid(grid: UniformGrid) -> UniformGrid:
    """Vertex lattice of all cell shifts ``-(n-1)..(n-1)`` times the spacing."""
    n = grid.points_per_axis
    return UniformGrid(grid.dim, (2 * n - 1) * grid.spacing / 2, 2 * n - 1)


def overlap_counts(A: IndicatorSet, A0: IndicatorSet) -> np.ndarray:
    """``|A ∩ (k + A0)|`` in pixels, indexed by ``k + n - 1``; FFT correlation, rounded."""
    check_same_grid(A.grid, A0.grid)
    flip = (slice(None, None, -1),) * A.grid.dim
    raw = fftconvolve(A.mask.astype(float), A0.mask[flip].astype(float), mode="full")
    counts = np.rint(raw)
    err = float(np.max(np.abs(raw - counts))) if raw.size else 0.0
    if err > ROUND_TOL:
        raise ArithmeticError(f"correlation is {err:.2e} away from an integer count")
    return counts.astype(np.int64)


def overlap_counts_direct(A: IndicatorSet, A0: IndicatorSet) -> np.ndarray:
    """Same table as :func:`overlap_counts` by summing shifted copies of ``A``, one per pixel of ``A0``."""
    check_same_grid(A.grid, A0.grid)
    n = A.grid.points_per_axis
    m = A.grid.dim
    padded = np.zeros((3 * n - 2,) * m, dtype=np.int64)
    padded[(slice(n - 1, 2 * n - 1),) * m] = A.mask
    out = np.zeros((2 * n - 1,) * m, dtype=np.int64)
    for p in zip(*np.nonzero(A0.mask)):
        # index k + n - 1 reads A[p + k]
        out += padded[tuple(slice(pi, pi + 2 * n - 1) for pi in p)]
    return out


def overlap_function(A: IndicatorSet, A0: IndicatorSet) -> GridFunction:
    """``h_A`` on the shift lattice, in measure units (real values)."""
    counts = overlap_counts(A, A0)
    vals = (A.count + A0.count - counts) * A.grid.cell_volume
    return GridFunction(shift_grid(A.grid), vals.astype(complex))


def _valid_shifts(A0: IndicatorSet) -> np.ndarray:
    """Shifts keeping every pixel of ``A0`` inside the window."""
    g = A0.grid
    n = g.points_per_axis
    ok = np.ones((2 * n - 1,) * g.dim, dtype=bool)
    ks = np.arange(-(n - 1), n)
    for ax in range(g.dim):
        idx = np.nonzero(np.any(A0.mask, axis=tuple(a for a in range(g.dim) if a != ax)))[0]
        lo, hi = idx.min(), idx.max()
        good = (ks + lo >= 0) & (ks + hi <= n - 1)
        shape = [1] * g.dim
        shape[ax] = ks.size
        ok = ok & good.reshape(shape)
    return ok


def union_growth_direct(A: IndicatorSet, A0: IndicatorSet, k) -> int:
    """``|A ∪ (k + A0)| - |A|`` in pixels by explicit mask shifting."""
    moved = shift_array(A0.mask, k, fill=False)
    if int(np.count_nonzero(moved)) != A0.count:
        raise GridError(f"shift {tuple(k)} moves part of the set out of the window")
    return int(np.count_nonzero(A.mask | moved)) - A.count


def budget_pixels(eps: float, grid: UniformGrid) -> int:
    return int(math.floor(eps / grid.cell_volume * (1 + 1e-12)))


@dataclass(frozen=True)
class TranslationSearchResult:
    shift: tuple
    w: tuple
    branch: str
    route: str
    eps: float
    budget_pixels: int
    growth_A: int
    growth_B: int
    measures: dict

    @property
    def strict_A(self) -> bool:
        return self.growth_A > 0

    @property
    def strict_B(self) -> bool:
        return self.growth_B > 0

    def as_dict(self) -> dict:
        return {
            "shift_cells": list(self.shift),
            "w": list(self.w),
            "branch": self.branch,
            "route": self.route,
            "eps": self.eps,
            "budget_pixels": self.budget_pixels,
            "growth_A_pixels": self.growth_A,
            "growth_B_pixels": self.growth_B,
            "measures": self.measures,
        }


def _check_pre(A, A0, B, B0, eps):
    for s in (A0, B, B0):
        check_same_grid(A.grid, s.grid)
    if not A0.issubset(A) or not B0.issubset(B):
        raise ValueError("need A0 ⊆ A and B0 ⊆ B")
    if A0.count == 0 or B0.count == 0:
        raise ValueError("A0 and B0 must have positive measure")
    if not 0 < eps < A0.measure:
        raise ValueError(f"eps = {eps} must lie in (0, |A0|) = (0, {A0.measure})")


def _ray(k: np.ndarray):
    """Lattice points strictly between 0 and ``k`` on the segment, outermost first."""
    g = math.gcd(*(abs(int(v)) for v in k))
    if g <= 1:
        return
    step = k // g
    for m in range(g - 1, 0, -1):
        yield step * m


def _growth_tables(A, A0, B, B0):
    gA = A0.count - overlap_counts(A, A0)
    gB = B0.count - overlap_counts(B, B0)
    valid = _valid_shifts(A0) & _valid_shifts(B0)
    return gA, gB, valid


def find_translation(
    A: IndicatorSet,
    A0: IndicatorSet,
    B: IndicatorSet,
    B0: IndicatorSet,
    eps: float,
    max_radius: int | None = None,
) -> TranslationSearchResult:
    """A grid shift ``w`` with ``|A ∪ (w+A0)| <= |A| + eps``, ``|B ∪ (w+B0)| <= |B| + eps``
    and at least one strict growth.

    The search follows the level-set argument: ``delta`` is the smallest norm
    at which the A-growth exceeds the budget; candidates strictly inside that
    ball with positive A-growth are tried outermost first (case 1: B bound
    holds), then shrunk along their lattice ray (case 2). If both fail, the
    minimal-norm feasible shift of the whole table is taken. ``max_radius``
    (cells) caps the search.

    Raises
    ------
    ValueError
        Preconditions (``A0 ⊆ A``, ``B0 ⊆ B``, ``0 < eps < |A0|``).
    TranslationSearchError
        If no feasible shift exists on this grid.
    """
    _check_pre(A, A0, B, B0, eps)
    grid = A.grid
    n = grid.points_per_axis
    e = budget_pixels(eps, grid)
    gA, gB, valid = _growth_tables(A, A0, B, B0)
    ks = np.indices(gA.shape).reshape(grid.dim, -1).T - (n - 1)
    r2 = np.sum(ks**2, axis=1)
    gA_f, gB_f, valid_f = gA.ravel(), gB.ravel(), valid.ravel()
    if max_radius is not None:
        valid_f = valid_f & (r2 <= max_radius**2)

    def feasible(i):
        return valid_f[i] and gA_f[i] <= e and gB_f[i] <= e and (gA_f[i] > 0 or gB_f[i] > 0)

    def at(k):
        return int(np.ravel_multi_index(tuple(np.asarray(k) + n - 1), gA.shape))

    def result(i, route):
        k = tuple(int(v) for v in ks[i])
        return TranslationSearchResult(
            shift=k,
            w=tuple(v * grid.spacing for v in k),
            branch="A" if gA_f[i] > 0 else "B",
            route=route,
            eps=eps,
            budget_pixels=e,
            growth_A=int(gA_f[i]),
            growth_B=int(gB_f[i]),
            measures={
                "A": A.measure,
                "A_union": (A.count + int(gA_f[i])) * grid.cell_volume,
                "B": B.measure,
                "B_union": (B.count + int(gB_f[i])) * grid.cell_volume,
            },
        )

    above = valid_f & (gA_f > e)
    if np.any(above):
        delta2 = int(np.min(r2[above]))
        inside = np.flatnonzero(valid_f & (r2 < delta2) & (gA_f > 0))
        # outermost first, ties lexicographic
        order = sorted(inside, key=lambda i: (-r2[i], tuple(ks[i])))
        for i in order:
            if gB_f[i] <= e:
                return result(i, "case1")
        for i in order:
            for q in _ray(ks[i]):
                j = at(q)
                if feasible(j):
                    return result(j, "case2")
    cand = [i for i in np.flatnonzero(valid_f) if feasible(i)]
    if cand:
        i = min(cand, key=lambda i: (r2[i], tuple(ks[i])))
        return result(i, "fallback")
    raise TranslationSearchError(
        f"no grid shift grows A or B by 1..{e} pixels (eps = {eps}); the grid is too coarse for this budget"
    )


def exhaustive_feasible(A, A0, B, B0, eps: float, max_radius: int | None = None) -> list[tuple]:
    """Every feasible shift, by direct counting (no FFT)."""
    _check_pre(A, A0, B, B0, eps)
    n = A.grid.points_per_axis
    e = budget_pixels(eps, A.grid)
    gA = A0.count - overlap_counts_direct(A, A0)
    gB = B0.count - overlap_counts_direct(B, B0)
    ok = _valid_shifts(A0) & _valid_shifts(B0) & (gA <= e) & (gB <= e) & ((gA > 0) | (gB > 0))
    ks = np.argwhere(ok) - (n - 1)
    if max_radius is not None:
        ks = ks[np.sum(ks**2, axis=1) <= max_radius**2]
    return [tuple(int(v) for v in k) for k in ks]


def verify_translation(A, A0, B, B0, res: TranslationSearchResult) -> dict:
    """Re-check a result by shifting masks and counting pixels."""
    ga = union_growth_direct(A, A0, res.shift)
    gb = union_growth_direct(B, B0, res.shift)
    e = res.budget_pixels
    return {
        "growth_A": ga,
        "growth_B": gb,
        "soft_A": ga <= e,
        "soft_B": gb <= e,
        "strict": ga > 0 or gb > 0,
        "ok": ga <= e and gb <= e and (ga > 0 or gb > 0),
    }


# --------------------------------------------------------------------------
# bounded construction


@dataclass
class ConstructionTrace:
    E: list
    Omega: list
    translations: list
    N: int
    unit: float
    growth_log: list = field(default_factory=list)
    truncated: bool = False
    failure: str | None = None
    transport: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.translations)

    def check_invariants(self) -> dict:
        contain = all(self.E[j - 1].issubset(self.E[j]) and self.Omega[j - 1].issubset(self.Omega[j]) for j in range(1, len(self.E)))
        vol = self.E[0].grid.cell_volume
        budget = True
        for j in range(1, len(self.E)):
            b = budget_pixels(self.unit * 2.0 ** -(j + self.N), self.E[0].grid)
            budget &= self.E[j].count - self.E[j - 1].count <= b
            budget &= self.Omega[j].count - self.Omega[j - 1].count <= b
        total_E = (self.E[-1].count - self.E[0].count) * vol
        total_O = (self.Omega[-1].count - self.Omega[0].count) * vol
        return {
            "containment": bool(contain),
            "step_budgets": bool(budget),
            "total_growth_E": total_E,
            "total_growth_Omega": total_O,
            "total_within_unit": bool(total_E <= self.unit and total_O <= self.unit),
        }

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "unit": self.unit,
            "steps": self.steps,
            "translations": [r.as_dict() for r in self.translations],
            "measures_E": [s.measure for s in self.E],
            "measures_Omega": [s.measure for s in self.Omega],
            "growth_log": self.growth_log,
            "truncated": self.truncated,
            "failure": self.failure,
            "transport": self.transport,
            "invariants": self.check_invariants(),
        }


def iterate_construction(
    E0: IndicatorSet,
    Omega0: IndicatorSet,
    N: int,
    J: int,
    unit: float = 1.0,
    f0: GridFunction | None = None,
    params=None,
    max_radius: int | None = None,
) -> ConstructionTrace:
    """``E_j = E_{j-1} ∪ (w_j + E0)``, ``Omega_j = Omega_{j-1} ∪ (w_j + Omega0)`` with budgets ``unit 2^-(j+N)``.

    A failed search truncates the trace and records why. With ``f0`` and
    ``params`` the translates ``f_j = T_{w_j} f0`` are built and their support
    transport is measured.
    """
    if not 0 <= J <= MAX_STEPS:
        raise ValueError(f"J must lie in 0..{MAX_STEPS}")
    check_same_grid(E0.grid, Omega0.grid)
    trace = ConstructionTrace([E0], [Omega0], [], N, unit)
    S0 = None
    if f0 is not None and params is not None:
        from .twisted import propagate_special_hermite

        S0 = propagate_special_hermite(f0, params)
    for j in range(1, J + 1):
        eps = unit * 2.0 ** -(j + N)
        E, O = trace.E[-1], trace.Omega[-1]
        try:
            res = find_translation(E, E0, O, Omega0, eps, max_radius)
        except (TranslationSearchError, ValueError) as exc:
            trace.truncated = True
            trace.failure = f"step {j}: {exc}"
            break
        trace.translations.append(res)
        trace.E.append(E.union(E0.shifted(res.shift)))
        trace.Omega.append(O.union(Omega0.shifted(res.shift)))
        trace.growth_log.append({"step": j, "eps": eps, "branch": res.branch, "route": res.route,
                                 "growth_E_pixels": res.growth_A, "growth_Omega_pixels": res.growth_B})
        if S0 is not None:
            trace.transport.append(_transport_check(f0, S0, E0, Omega0, res, params))
    return trace


def _transport_check(f0, S0, E0, Omega0, res, params) -> dict:
    """Support of ``f_j`` and leakage of ``S f_j`` relative to the translated sets."""
    from .numgrid import norm
    from .twisted import propagate_special_hermite, twisted_translate

    lam = params.lam
    fj = twisted_translate(f0, res.w, lam)
    Ej, Oj = E0.shifted(res.shift), Omega0.shifted(res.shift)
    nf = norm(f0)
    support_leak = math.sqrt(float(np.sum(np.abs(fj.values[~Ej.mask]) ** 2)) * fj.grid.cell_volume) / nf
    Sj = propagate_special_hermite(fj, params, guard=False)
    leak_j = math.sqrt(float(np.sum(np.abs(Sj.values[~Oj.mask]) ** 2)) * fj.grid.cell_volume) / nf
    leak_0 = math.sqrt(float(np.sum(np.abs(S0.values[~Omega0.mask]) ** 2)) * f0.grid.cell_volume) / nf
    # equivariance: S f_j = T_{w_j} S f_0
    TS = twisted_translate(S0, res.w, lam) if _fits(S0, res.shift) else None
    equiv = None if TS is None else norm(Sj - TS) / nf
    return {
        "support_leakage": support_leak,
        "support_ok": support_leak <= 1e-8,
        "S_leakage_fj": leak_j,
        "S_leakage_f0": leak_0,
        "leakage_transported": abs(leak_j - leak_0) <= 1e-6,
        "equivariance_defect": equiv,
    }


def _fits(f: GridFunction, shift) -> bool:
    moved = shift_array(np.abs(f.values) ** 2, shift, fill=0)
    total = float(np.sum(np.abs(f.values) ** 2))
    return total - float(np.sum(moved)) <= 1e-10 * total
