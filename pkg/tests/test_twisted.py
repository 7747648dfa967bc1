import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import fftconvolve

from hermobs.numgrid import GridError, GridFunction, make_uniform_grid, norm
from hermobs.params import PropagatorParams, ResonanceError
from hermobs.twisted import (
    SupportError,
    apply_kernel_direct,
    apply_kernel_fast,
    calibrate_cd,
    propagate_special_hermite,
    schrodinger_kernel,
    twisted_convolve,
    twisted_translate,
)

G = make_uniform_grid(2, 6.0, 32)
G128 = make_uniform_grid(2, 8.0, 128)


def blob(grid, seed, width=0.7):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1, 1, 2)
    a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    return GridFunction.from_callable(
        grid, lambda x, y: (a[0] + a[1] * x + a[2] * y) * np.exp(-((x - c[0]) ** 2 + (y - c[1]) ** 2) / (2 * width**2))
    )


def test_spike_is_a_unit():
    g = blob(G, 0)
    spike = np.zeros(G.shape, complex)
    spike[16, 16] = 1 / G.cell_volume
    out = twisted_convolve(g, GridFunction(G, spike), 0.9)
    assert out.grid == G.dual()
    # node w0 = (h/2, h/2); output node i+1 of the dual grid sits at z = x_i + w0
    w0 = G.axis()[16]
    z = out.grid.axis()[1:]
    # Im(z . conj w0) = y u - x v with u = v = w0
    X, Y = np.meshgrid(z, z, indexing="ij")
    phase = np.exp(0.45j * (Y * w0 - X * w0))
    assert np.max(np.abs(out.values[1:, 1:] - phase * g.values)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(-2, 2))
def test_commutation(seed, lam):
    g, h = blob(G, seed), blob(G, seed + 1)
    a = twisted_convolve(g, h, lam)
    b = twisted_convolve(h, g, -lam)
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_plain_convolution_oracle():
    g, h = blob(G, 3), blob(G, 4)
    out = twisted_convolve(g, h, 0.0)
    full = fftconvolve(g.values, h.values) * G.cell_volume
    # full index m = i + k; dual node j corresponds to m = j + n/2 - 1 ... taken from the window centre
    n = G.points_per_axis
    ref = full[n // 2 - 1 : n // 2 + n, n // 2 - 1 : n // 2 + n]
    assert np.max(np.abs(out.values - ref)) < 1e-8 * np.max(np.abs(ref))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
def test_bilinearity(seed, a, b):
    g1, g2, h = blob(G, seed), blob(G, seed + 7), blob(G, seed + 9)
    lhs = twisted_convolve(g1 * a + g2 * b, h, 1.1)
    rhs = twisted_convolve(g1, h, 1.1) * a + twisted_convolve(g2, h, 1.1) * b
    assert np.max(np.abs(lhs.values - rhs.values)) < 1e-12 * (1 + np.max(np.abs(lhs.values)))


def test_translation_properties():
    g = blob(G, 5, 0.5)
    assert np.array_equal(twisted_translate(g, (0.0, 0.0), 1.0).values, g.values)
    w = (2 * G.spacing, -3 * G.spacing)
    t = twisted_translate(g, w, 1.3)
    assert abs(norm(t) - norm(g)) < 1e-14 * norm(g)
    with pytest.raises(GridError):
        twisted_translate(g, (0.1234, 0.0), 1.0)
    with pytest.raises(SupportError):
        twisted_translate(g, (16 * G.spacing, 0.0), 1.0)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.integers(-3, 3), st.integers(-3, 3))
def test_intertwining(seed, i, j):
    g, h = blob(G, seed, 0.35), blob(G, seed + 1, 0.35)
    lam = 0.8
    w = (i * G.spacing, j * G.spacing)
    lhs = twisted_convolve(twisted_translate(g, w, lam), h, lam)
    rhs = twisted_translate(twisted_convolve(g, h, lam), w, lam)
    assert np.max(np.abs(lhs.values - rhs.values)) < 1e-8


def test_support_guard():
    edge = GridFunction.from_callable(G, lambda x, y: np.exp(-((x - 5.5) ** 2 + y**2)))
    with pytest.raises(SupportError):
        twisted_convolve(edge, blob(G, 1), 1.0)
    with pytest.raises(SupportError):
        propagate_special_hermite(edge, PropagatorParams(1.0, 1.0))


def test_kernel_modulus_and_periodicity():
    p = PropagatorParams(1.0, math.pi / 2)
    k = schrodinger_kernel(p)
    vals = k.on_grid(G).values
    assert np.max(np.abs(np.abs(vals) - 1 / (4 * math.pi))) < 1e-15
    p2 = PropagatorParams(1.7, 0.4)
    k1 = schrodinger_kernel(p2).on_grid(G).values
    k2 = schrodinger_kernel(p2.at_time(0.4 + 2 * math.pi / 1.7)).on_grid(G).values
    assert np.max(np.abs(k1 - k2)) < 1e-12
    assert np.max(np.abs(np.abs(k1) - abs(1.7 / math.sin(0.68)) / (4 * math.pi))) < 1e-14
    with pytest.raises(ResonanceError):
        schrodinger_kernel(PropagatorParams(1.0, math.pi))


def test_fast_path_matches_direct():
    u = blob(G, 8)
    for p in (PropagatorParams(1.0, 0.6), PropagatorParams(-2.0, 0.3)):
        k = schrodinger_kernel(p)
        a, b = apply_kernel_fast(u, k), apply_kernel_direct(u, k)
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(b))
        pts = np.array([[7.0, -1.0], [0.3, 9.2]])
        assert np.allclose(apply_kernel_fast(u, k, pts), apply_kernel_direct(u, k, pts), rtol=1e-12, atol=1e-15)


def test_kernel_matches_convolution_definition():
    # S u0 = u0 x_lam p. The chirp kernel does not decay, so it is sampled on a
    # window wide enough to cover every difference z - w that meets supp u0.
    g = make_uniform_grid(2, 3.0, 24)
    u = GridFunction.from_callable(g, lambda x, y: np.exp(-2 * (x**2 + y**2)))
    p = PropagatorParams(1.0, 0.8)
    k = schrodinger_kernel(p)
    wide = make_uniform_grid(2, 12.0, 96)
    via_conv = twisted_convolve(u, k.on_grid(wide), p.lam, guard=False)
    pts = via_conv.grid.points()
    inner = np.max(np.abs(pts), axis=1) <= 3.0
    direct = apply_kernel_fast(u, k, pts[inner])
    assert np.max(np.abs(via_conv.values.ravel()[inner] - direct)) < 1e-12


def test_unitarity_group_and_periodicity():
    u0 = GridFunction.from_callable(G128, lambda x, y: np.exp(-((x - 0.7) ** 2 + (y + 0.4) ** 2) / 2))
    p = PropagatorParams(1.0, 1.0)
    s = propagate_special_hermite(u0, p)
    assert abs(norm(s) / norm(u0) - 1) < 1e-3
    back = propagate_special_hermite(s, p.at_time(-1.0), guard=False)
    assert norm(back - u0) / norm(u0) < 1e-3
    again = propagate_special_hermite(u0, p.at_time(1.0 + 2 * math.pi))
    assert norm(again - s) / norm(s) < 1e-9


def test_equivariance():
    g = make_uniform_grid(2, 10.0, 120)
    u0 = GridFunction.from_callable(g, lambda x, y: np.exp(-((x - 0.3) ** 2 + y**2) / 4))
    p = PropagatorParams(1.0, 0.8)
    w = (4 * g.spacing, -2 * g.spacing)
    lhs = propagate_special_hermite(twisted_translate(u0, w, p.lam), p)
    rhs = twisted_translate(propagate_special_hermite(u0, p), w, p.lam)
    assert norm(lhs - rhs) / norm(u0) < 1e-6


def test_refinement_improves_unitarity():
    p = PropagatorParams(1.0, 0.1)
    errs = []
    for n in (96, 160):
        g = make_uniform_grid(2, 8.0, n)
        u = GridFunction.from_callable(g, lambda x, y: np.exp(-((x - 1) ** 2 + y**2) / (2 * 0.2**2)))
        errs.append(abs(norm(propagate_special_hermite(u, p)) / norm(u) - 1))
    assert errs[1] < errs[0]


def test_cd_calibration():
    cal = calibrate_cd(lambda x, y: np.exp(-((x - 0.5) ** 2 + y**2) / 2), PropagatorParams(1.0, 1.0))
    assert cal.relative_error < 1e-3
    assert abs(cal.calibrated[-1] * 4 * math.pi - 1) < 1e-3
