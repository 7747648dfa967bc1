import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermobs.numgrid import Box, GridFunction, IndicatorSet, make_uniform_grid, rasterize_set
from hermobs.params import PropagatorParams
from hermobs.setgeom import (
    exhaustive_feasible,
    find_translation,
    iterate_construction,
    overlap_counts,
    overlap_counts_direct,
    overlap_function,
    TranslationSearchError,
    union_growth_direct,
    verify_translation,
)

G = make_uniform_grid(2, 1.0, 32)


def random_pair(rng, grid=G):
    n = grid.points_per_axis
    m = rng.random(grid.shape) < 0.3
    m[n // 4 : n // 2, n // 4 : n // 2] = True
    sub = m & (rng.random(grid.shape) < 0.5)
    sub[n // 3, n // 3] = True
    return IndicatorSet(grid, m), IndicatorSet(grid, sub)


def test_overlap_at_zero_and_far_away():
    A = rasterize_set(Box((-0.5, -0.5), (0.5, 0.5)), G)
    A0 = rasterize_set(Box((-0.2, -0.2), (0.1, 0.1)), G)
    h = overlap_function(A, A0)
    n = G.points_per_axis
    assert h.values[n - 1, n - 1].real == pytest.approx(A.measure)
    # a shift that separates the sets entirely
    assert h.values[n - 1 + 20, n - 1].real == pytest.approx(A.measure + A0.measure)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_fft_counts_match_direct(seed):
    A, A0 = random_pair(np.random.default_rng(seed))
    assert np.array_equal(overlap_counts(A, A0), overlap_counts_direct(A, A0))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(-10, 10), st.integers(-10, 10))
def test_overlap_identity_and_bounds(seed, i, j):
    A, A0 = random_pair(np.random.default_rng(seed))
    n = G.points_per_axis
    h = overlap_function(A, A0).values.real
    vol = G.cell_volume
    val = h[i + n - 1, j + n - 1]
    assert A.measure - 1e-12 <= val <= A.measure + A0.measure + 1e-12
    moved = A0.mask
    try:
        growth = union_growth_direct(A, A0, (i, j))
    except Exception:
        return
    assert val == pytest.approx((A.count + growth) * vol)
    assert np.any(moved)


def test_budget_preconditions():
    A = rasterize_set(Box((-0.3, -0.3), (0.3, 0.3)), G)
    m = np.zeros(G.shape, bool)
    m[16, 16] = True
    A0 = IndicatorSet(G, m)
    with pytest.raises(ValueError):
        find_translation(A, A0, A, A0, A0.measure)
    with pytest.raises(ValueError):
        find_translation(A0, A, A, A0, 0.5 * A.measure)
    # a one-pixel A0 leaves a budget of zero pixels: nothing can grow
    with pytest.raises(TranslationSearchError):
        find_translation(A, A0, A, A0, 0.9 * A0.measure)


def test_search_matches_exhaustive_oracle():
    g = make_uniform_grid(2, 1.0, 48)
    rng = np.random.default_rng(4)
    X, Y = np.indices(g.shape)
    for _ in range(6):
        c = rng.integers(16, 32, 2)
        A = IndicatorSet(g, (X - c[0]) ** 2 + (Y - c[1]) ** 2 < 100)
        A0 = IndicatorSet(g, A.mask & ((X - c[0]) ** 2 + (Y - c[1]) ** 2 < 16))
        B = IndicatorSet(g, (np.abs(X - 24) < 9) & (np.abs(Y - 24) < 9))
        B0 = IndicatorSet(g, B.mask & (np.abs(X - 24) < 3) & (np.abs(Y - 24) < 3))
        eps = 2.0**-3 * A0.measure
        feasible = exhaustive_feasible(A, A0, B, B0, eps)
        if not feasible:
            continue
        res = find_translation(A, A0, B, B0, eps)
        chk = verify_translation(A, A0, B, B0, res)
        assert chk["ok"]
        assert res.shift in feasible
        assert res.growth_A == chk["growth_A"] and res.growth_B == chk["growth_B"]


def test_construction_with_zero_steps():
    E0 = rasterize_set(Box((-0.1, -0.1), (0.1, 0.1)), G)
    tr = iterate_construction(E0, E0, N=4, J=0)
    assert tr.steps == 0 and not tr.truncated
    assert tr.check_invariants()["total_growth_E"] == 0


def test_construction_invariants():
    g = make_uniform_grid(2, 0.5, 128)
    E0 = rasterize_set(Box((-0.09375, -0.09375), (0.09375, 0.09375)), g)
    tr = iterate_construction(E0, E0, N=4, J=5)
    assert tr.steps == 5 and not tr.truncated
    inv = tr.check_invariants()
    assert inv["containment"] and inv["step_budgets"] and inv["total_within_unit"]
    assert inv["total_growth_E"] <= 2.0**-4


def test_coarse_grid_truncates_with_reason():
    g = make_uniform_grid(2, 1.0, 128)
    E0 = rasterize_set(Box((-0.5, -0.5), (0.5, 0.5)), g)
    tr = iterate_construction(E0, E0, N=4, J=5)
    assert tr.truncated
    assert "step 5" in tr.failure
    assert tr.check_invariants()["containment"]


def test_transport_of_translated_data():
    g = make_uniform_grid(2, 6.0, 96)
    E0 = rasterize_set(Box((-1.0, -1.0), (1.0, 1.0)), g)
    f0 = GridFunction.from_callable(g, lambda x, y: np.where((np.abs(x) < 1) & (np.abs(y) < 1), np.exp(-(x**2 + y**2)), 0))
    p = PropagatorParams(1.0, 0.5)
    tr = iterate_construction(E0, E0, N=0, J=2, unit=4.0, f0=f0, params=p)
    assert tr.steps >= 1
    for rec in tr.transport:
        assert rec["support_ok"]
