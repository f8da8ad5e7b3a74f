import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebelab.grid import (Domain, Puncture, PunctureTooClose,
                         ResolutionTooCoarse, StencilHitsExcision, TorusGrid,
                         build_domain, diff, inner, laplace_mixed,
                         radial_distance, solve_poisson, torus_delta)


def test_grid_invariants():
    g = TorusGrid(16, 17, 2 * np.pi)
    assert g.y[0] == 0.0 and g.y[-1] == 1.0
    assert len(g.x) == 16 and g.x[-1] < g.L
    with pytest.raises(ResolutionTooCoarse):
        TorusGrid(6, 17)
    with pytest.raises(ResolutionTooCoarse):
        TorusGrid(16, 7)


def test_build_domain_no_punctures():
    g = TorusGrid(16, 17, 2 * np.pi)
    d = build_domain(g)
    assert not d.excised.any() and not d.shell.any()
    total = (d.interior.astype(int) + d.y0_face.astype(int)
             + d.y1_face.astype(int))
    assert (total == 1).all()


def test_excised_count_matches_brute_force():
    g = TorusGrid(16, 17, 2 * np.pi)
    eps = 0.45
    p = Puncture(0.5, 0.0 + 0.0j, (1,))
    d = build_domain(g, [p], epsilon=eps)
    y, x1, x2 = g.mesh()
    cnt = 0
    for iy in range(g.N_y):
        for i in range(g.N_sigma):
            for j in range(g.N_sigma):
                d1 = min(abs(i * g.h_sigma - 0.0),
                         g.L - abs(i * g.h_sigma - 0.0))
                d2 = min(abs(j * g.h_sigma - 0.0),
                         g.L - abs(j * g.h_sigma - 0.0))
                if np.sqrt((g.y[iy] - 0.5) ** 2 + d1 ** 2 + d2 ** 2) < eps:
                    cnt += 1
    assert int(d.excised.sum()) == cnt
    # partition of nodes into exactly one class
    total = (d.excised.astype(int) + d.shell.astype(int)
             + d.interior.astype(int) + d.y0_face.astype(int)
             + d.y1_face.astype(int))
    assert (total == 1).all()


def test_puncture_too_close():
    g = TorusGrid(16, 17, 2 * np.pi)
    with pytest.raises(PunctureTooClose):
        build_domain(g, [Puncture(0.05, 0j, (1,))], epsilon=0.4)
    with pytest.raises(PunctureTooClose):
        build_domain(g, [Puncture(0.45, 0j, (1,)),
                         Puncture(0.55, 0.1 + 0j, (1,))], epsilon=0.4)


def test_radial_distance_wraparound():
    g = TorusGrid(16, 17, 2 * np.pi)
    d = build_domain(g, [Puncture(0.5, 0j, (1,))], epsilon=0.0)
    # node at the puncture's own grid location, eps=0 test mode
    assert radial_distance(d, (8, 0, 0), 0) == pytest.approx(0.0)
    # last column wraps to distance h_sigma
    assert radial_distance(d, (8, g.N_sigma - 1, 0), 0) == \
        pytest.approx(g.h_sigma)


@given(st.floats(-10, 10), st.floats(-10, 10))
@settings(max_examples=50, deadline=None)
def test_minimal_image_brute_force(x, x0):
    L = 2 * np.pi
    d = torus_delta(np.array([x]), x0, L)[0]
    images = [x - x0 + k * L for k in range(-4, 5)]
    assert abs(d) == pytest.approx(min(abs(v) for v in images), abs=1e-9)


def test_diff_constant_and_spectral_exactness(small_domain):
    g, d = small_domain
    y, x1, x2 = g.mesh()
    const = np.ones(g.shape)
    for direction in ("y", "x1", "x2"):
        assert np.abs(diff(d, const, direction)).max() < 1e-12
    m = 3
    f = np.sin(2 * np.pi * m * x1 / g.L)
    df = diff(d, f, "x1")
    exact = 2 * np.pi * m / g.L * np.cos(2 * np.pi * m * x1 / g.L)
    assert np.abs(df - exact).max() < 1e-12


def test_diff_linearity(small_domain):
    g, d = small_domain
    rng = np.random.default_rng(0)
    f = rng.normal(size=g.shape)
    # exact up to roundoff (spectral route and stencil route alike)
    assert np.abs(diff(d, 2.5 * f, "x1")
                  - 2.5 * diff(d, f, "x1")).max() < 1e-12
    assert np.abs(diff(d, 2.5 * f, "y")
                  - 2.5 * diff(d, f, "y")).max() < 1e-12


def test_diff_fd_near_excision_second_order():
    errs = {}
    for N in (16, 32):
        g = TorusGrid(N, N + 1, 2 * np.pi)
        d = build_domain(g, [Puncture(0.5, 0j, (1,))], epsilon=0.45)
        y, x1, x2 = g.mesh()
        f = np.sin(2 * np.pi * x1 / g.L) * np.cos(2 * np.pi * 2 * x2 / g.L)
        ex = (2 * np.pi / g.L) * np.cos(2 * np.pi * x1 / g.L) \
            * np.cos(2 * np.pi * 2 * x2 / g.L)
        got = diff(d, f, "x1")
        m = d.valid & (~d.sigma_slice_clean())[:, None, None]
        errs[N] = np.abs(got - ex)[m].max()
    assert 2.5 < errs[16] / errs[32] < 6.0


def test_stencil_hits_excision_reported():
    g = TorusGrid(16, 17, 2 * np.pi)
    d = build_domain(g, [Puncture(0.5, 0j, (1,))], epsilon=0.45)
    # carve an artificial 1-node-wide slot so a node loses both stencils
    d2 = Domain(grid=g, punctures=d.punctures, epsilon=d.epsilon,
                excised=d.excised.copy(), shell=d.shell, interior=d.interior,
                y0_face=d.y0_face, y1_face=d.y1_face)
    d2.excised[8, 2, :] = True
    d2.excised[8, 4, :] = True
    with pytest.raises(StencilHitsExcision) as exc:
        diff(d2, np.ones(g.shape), "x1")
    assert len(exc.value.nodes) > 0


def test_integration_by_parts(small_domain):
    g, d = small_domain
    y, x1, x2 = g.mesh()
    taper = np.sin(np.pi * y) ** 2
    u = taper * np.exp(np.sin(2 * np.pi * x1 / g.L))
    v = taper * np.cos(2 * np.pi * x2 / g.L + 0.3)
    # spectral directions: exact anti-symmetry
    for direction in ("x1", "x2"):
        val = inner(d, diff(d, u, direction), v) \
            + inner(d, u, diff(d, v, direction))
        assert abs(val) < 1e-10
    val = inner(d, diff(d, u, "y"), v) + inner(d, u, diff(d, v, "y"))
    assert abs(val) < 5e-3  # O(h^2) in y


def test_poisson_zero_rhs(small_domain):
    g, d = small_domain
    f = solve_poisson(d, np.zeros(g.shape))
    assert np.abs(f).max() < 1e-12


def test_poisson_manufactured(small_domain):
    errs = {}
    for N in (16, 32):
        g = TorusGrid(N, N + 1, 2 * np.pi)
        d = build_domain(g)
        y, x1, x2 = g.mesh()
        fstar = np.sin(np.pi * y / 2) * np.cos(2 * np.pi * x1 / g.L)
        lap = (-(np.pi / 2) ** 2 - (2 * np.pi / g.L) ** 2) * fstar
        f = solve_poisson(d, lap)
        errs[N] = np.abs(f - fstar)[d.free].max()
    assert 3.0 < errs[16] / errs[32] < 5.5


def test_poisson_roundtrip_punctured():
    g = TorusGrid(16, 17, 2 * np.pi)
    d = build_domain(g, [Puncture(0.5, 0j, (1,))], epsilon=0.45)
    rng = np.random.default_rng(1)
    y, x1, x2 = g.mesh()
    u = np.where(d.free, np.sin(2 * np.pi * x1 / g.L) * y
                 + 0.2 * np.cos(2 * np.pi * x2 / g.L), 0.0)
    rhs = laplace_mixed(d, u)
    sol = solve_poisson(d, rhs, tol=1e-12)
    resid = laplace_mixed(d, sol) - rhs
    assert np.abs(resid[d.free]).max() < 1e-10 * max(1, np.abs(rhs).max())
