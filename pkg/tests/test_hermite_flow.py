import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermobs.hermite import HermiteExpansion, rescale_to_unit
from hermobs.hermite_flow import (
    hermite_observability_experiment,
    propagate_grid_spectral,
    propagate_hermite_frft,
    propagate_hermite_spectral,
    sin_sweep_times,
)
from hermobs.numgrid import Box, GridFunction, IndicatorSet, make_uniform_grid, norm, rasterize_set
from hermobs.observability import gaussian_mixture_samples
from hermobs.params import PropagatorParams, ResonanceError

G = make_uniform_grid(1, 16.0, 512)


def gaussian(grid=G):
    return GridFunction.from_callable(grid, lambda x: np.exp(-((x - 0.5) ** 2)) * (1 + 0.5j * x))


def rand_c(seed, lam=1.0, dim=1, cutoff=20):
    rng = np.random.default_rng(seed)
    n = math.comb(cutoff + dim, dim)
    return HermiteExpansion(dim, lam, cutoff, rng.standard_normal(n) + 1j * rng.standard_normal(n))


def test_period_and_half_period():
    for lam, d in ((1.0, 1), (2.5, 2), (0.5, 3)):
        c = rand_c(3, lam, d, 8)
        full = propagate_hermite_spectral(c, PropagatorParams(lam, 2 * math.pi / lam, d))
        assert np.max(np.abs(full.coeffs - c.coeffs)) < 1e-12
        half = propagate_hermite_spectral(c, PropagatorParams(lam, math.pi / lam, d))
        assert np.max(np.abs(half.coeffs - (-1) ** d * c.coeffs)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20).filter(lambda t: abs(t) > 1e-6), st.floats(-20, 20).filter(lambda t: abs(t) > 1e-6),
       st.sampled_from([0.5, 1.0, -2.0]), st.integers(0, 500))
def test_group_periodicity_unitarity(s, t, lam, seed):
    c = rand_c(seed, lam)
    p = PropagatorParams(lam, t)
    u = propagate_hermite_spectral(c, p)
    assert abs(u.l2_norm() - c.l2_norm()) < 1e-12 * c.l2_norm()
    if abs(s + t) > 1e-6:
        two = propagate_hermite_spectral(propagate_hermite_spectral(c, p.at_time(s)), p)
        assert np.max(np.abs(two.coeffs - propagate_hermite_spectral(c, p.at_time(s + t)).coeffs)) < 1e-11
    shifted = propagate_hermite_spectral(c, p.at_time(t + 2 * math.pi / abs(lam)))
    assert np.max(np.abs(shifted.coeffs - u.coeffs)) < 1e-11


def test_scale_mismatch():
    with pytest.raises(ValueError):
        propagate_hermite_spectral(rand_c(1, 2.0), PropagatorParams(1.0, 0.3))


@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_two_routes_agree(lam):
    u = gaussian()
    for t in (0.3, 0.7, 1.9):
        p = PropagatorParams(lam, t)
        a = propagate_grid_spectral(u, p)
        b = propagate_hermite_frft(u, p)
        assert norm(a - b) / norm(a) < 1e-8


def test_chirp_route_unit_scale():
    u = gaussian()
    p = PropagatorParams(1.0, 0.7)
    a = propagate_grid_spectral(u, p)
    assert norm(propagate_hermite_frft(u, p, method="chirp") - a) / norm(a) < 1e-8


def test_resonant_time_special_case():
    u = gaussian()
    p = PropagatorParams(1.0, math.pi)
    out = propagate_hermite_frft(u, p)
    ref = propagate_grid_spectral(u, p)
    assert norm(out - ref) < 1e-10
    # t = pi/|lam| multiplies by (-1)^d
    proj = propagate_grid_spectral(u, p.at_time(2 * math.pi))
    assert norm(out + proj) < 1e-10


def test_substitution_norm_identity():
    u = gaussian()
    for lam in (0.5, 3.0):
        assert abs(norm(rescale_to_unit(u, lam)) ** 2 - math.sqrt(lam) * norm(u) ** 2) < 1e-10


def box(a=1.0, grid=G):
    return rasterize_set(Box((-a,), (a,)), grid)


def test_observability_experiment():
    A = box()
    samples, _ = gaussian_mixture_samples(G, 30, 11)
    rep = hermite_observability_experiment(samples, PropagatorParams(1.0, 0.7), A, A)
    assert 0 < rep.sigma_max < 1
    assert rep.certified_constant == 2 * (1 / (1 - rep.sigma_max) + 1) ** 2
    assert all(r <= rep.certified_constant for r in rep.ratios)
    assert rep.sigma_max <= rep.hs_norm
    assert rep.extra["scaled_sets"]["measure_A_alpha"] == A.measure


def test_sample_off_A_flagged():
    A = box()
    u = GridFunction.from_callable(G, lambda x: np.exp(-((x - 6.0) ** 2)))
    u = GridFunction(G, np.where(A.mask, 0, u.values))
    rep = hermite_observability_experiment([u], PropagatorParams(1.0, 0.7), A, A)
    assert rep.ratios[0] <= 1 + 1e-6


def test_whole_window_B_limit():
    samples, _ = gaussian_mixture_samples(G, 2, 1)
    whole = IndicatorSet(G, np.ones(G.shape, bool))
    small = hermite_observability_experiment(samples, PropagatorParams(1.0, 0.7), box(1.0), whole, tol=1e-8).sigma_max
    big = hermite_observability_experiment(samples, PropagatorParams(1.0, 0.7), box(3.0), whole, tol=1e-8).sigma_max
    assert small <= big < 1
    assert big > 0.999


def test_resonance_rejected():
    with pytest.raises(ResonanceError):
        hermite_observability_experiment([gaussian()], PropagatorParams(1.0, math.pi / 2), box(), box())


def test_sweep_trend():
    samples, _ = gaussian_mixture_samples(G, 10, 2)
    A = box()
    cs = [hermite_observability_experiment(samples, PropagatorParams(1.0, t), A, A).certified_constant
          for t in sin_sweep_times((0.9, 0.5, 0.1))]
    assert cs[0] <= cs[1] <= cs[2]
