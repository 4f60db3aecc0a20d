"""Exact transport distances and certified contraction reports."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fpchain as fp


def _w1_cdf(grid, a, b):
    # 1D closed form: integral of |F_a - F_b|
    return float(np.abs(np.cumsum(a.weights - b.weights))[:-1].sum() * grid.h)


def _wp_quantile(grid, a, b, p):
    # common refinement of the two quantile functions
    x = grid.centers()[:, 0]
    ca = np.concatenate([[0.0], np.cumsum(a.weights)])
    cb = np.concatenate([[0.0], np.cumsum(b.weights)])
    levels = np.unique(np.concatenate([ca, cb]).round(15))
    total = 0.0
    for lo, hi in zip(levels[:-1], levels[1:]):
        if hi - lo <= 1e-15:
            continue
        mid = (lo + hi) / 2
        qa = x[np.searchsorted(ca[1:], mid, side="left")]
        qb = x[np.searchsorted(cb[1:], mid, side="left")]
        total += (hi - lo) * abs(qa - qb) ** p
    return total ** (1.0 / p)


def test_w1_between_point_masses_is_distance(quad1d8):
    grid = quad1d8.grid
    nu = fp.GridMeasure.point(grid, (1,))
    eta = fp.GridMeasure.point(grid, (8,))
    val, plan = fp.wasserstein(fp.TransportProblem(nu, eta, cost="euclidean", p=1))
    assert val == pytest.approx(1.75, rel=1e-12)
    assert plan[0, 7] == pytest.approx(1.0, abs=1e-12)


def test_w1_matches_cdf_oracle(rng):
    grid = fp.build_grid(1, 1.0, 0.125)
    for _ in range(10):
        a = fp.GridMeasure(grid, rng.dirichlet(np.ones(16)))
        b = fp.GridMeasure(grid, rng.dirichlet(np.ones(16)))
        val, _ = fp.wasserstein(fp.TransportProblem(a, b, cost="euclidean", p=1))
        assert val == pytest.approx(_w1_cdf(grid, a, b), abs=1e-10)


def test_w2_matches_quantile_oracle(rng):
    grid = fp.build_grid(1, 1.0, 0.25)
    for _ in range(10):
        a = fp.GridMeasure(grid, rng.dirichlet(np.ones(8)))
        b = fp.GridMeasure(grid, rng.dirichlet(np.ones(8)))
        val, _ = fp.wasserstein(fp.TransportProblem(a, b, cost="euclidean", p=2))
        assert val == pytest.approx(_wp_quantile(grid, a, b, 2), abs=1e-9)


def test_plan_marginals_and_nonnegativity(rng, nonadd2d):
    grid = nonadd2d.grid
    a = fp.GridMeasure(grid, rng.dirichlet(np.ones(64)))
    b = fp.GridMeasure(grid, rng.dirichlet(np.ones(64)))
    for cost in ("euclidean", "graph"):
        val, plan = fp.wasserstein(fp.TransportProblem(a, b, cost=cost, p=1))
        assert plan.min() >= 0
        np.testing.assert_allclose(plan.sum(axis=1), a.weights, atol=1e-10)
        np.testing.assert_allclose(plan.sum(axis=0), b.weights, atol=1e-10)
        # plan cost reproduces the reported value
        centers = grid.centers()
        if cost == "euclidean":
            C = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
        else:
            C = np.abs(centers[:, None, :] - centers[None, :, :]).sum(axis=2)
        assert float((plan * C).sum()) == pytest.approx(val, abs=1e-9)


def test_graph_cost_dominates_euclidean(rng, nonadd2d):
    grid = nonadd2d.grid
    a = fp.GridMeasure(grid, rng.dirichlet(np.ones(64)))
    b = fp.GridMeasure(grid, rng.dirichlet(np.ones(64)))
    ve, _ = fp.wasserstein(fp.TransportProblem(a, b, cost="euclidean", p=1))
    vg, _ = fp.wasserstein(fp.TransportProblem(a, b, cost="graph", p=1))
    assert ve <= vg + 1e-12
    assert vg <= np.sqrt(2) * ve + 1e-12


def test_wasserstein_symmetry_and_identity(rng):
    grid = fp.build_grid(1, 1.0, 0.25)
    a = fp.GridMeasure(grid, rng.dirichlet(np.ones(8)))
    b = fp.GridMeasure(grid, rng.dirichlet(np.ones(8)))
    vab, _ = fp.wasserstein(fp.TransportProblem(a, b, cost="euclidean", p=2))
    vba, _ = fp.wasserstein(fp.TransportProblem(b, a, cost="euclidean", p=2))
    assert vab == pytest.approx(vba, rel=1e-9)
    vaa, _ = fp.wasserstein(fp.TransportProblem(a, a, cost="euclidean", p=2))
    assert vaa == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_deterministic_rerun(rng):
    grid = fp.build_grid(1, 1.0, 0.125)
    a = fp.GridMeasure(grid, rng.dirichlet(np.ones(16)))
    b = fp.GridMeasure(grid, rng.dirichlet(np.ones(16)))
    prob = fp.TransportProblem(a, b, cost="euclidean", p=1)
    v1, p1 = fp.wasserstein(prob)
    v2, p2 = fp.wasserstein(prob)
    assert v1 == v2
    np.testing.assert_array_equal(p1, p2)


def test_wasserstein_rejects_oversized_problems():
    grid = fp.build_grid(2, 8.0, 0.125)  # 128 x 128 = 16384 states
    a = fp.GridMeasure(grid, np.full(grid.n_states, 1.0 / grid.n_states))
    with pytest.raises(ValueError, match="dense-transport limit"):
        fp.wasserstein(fp.TransportProblem(a, a, cost="euclidean", p=1))


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_w1_triangle_inequality(seed):
    grid = fp.build_grid(1, 1.0, 0.5)
    gen = np.random.Generator(np.random.Philox(key=seed))
    a = fp.GridMeasure(grid, gen.dirichlet(np.ones(4)))
    b = fp.GridMeasure(grid, gen.dirichlet(np.ones(4)))
    c = fp.GridMeasure(grid, gen.dirichlet(np.ones(4)))
    w = lambda x, y: fp.wasserstein(fp.TransportProblem(x, y, cost="euclidean", p=1))[0]
    assert w(a, c) <= w(a, b) + w(b, c) + 1e-9


def test_contraction_report_gating(quad1d8, nonadd2d, flat1d4):
    grid = quad1d8.grid
    nu = fp.GridMeasure.point(grid, (1,))
    eta = fp.GridMeasure.point(grid, (8,))
    times = np.array([0.0, 0.5])
    # quadratic 1D: every mode admissible
    for mode, p in (("W1_graph", None), ("W1_euclid", None), ("W2", 2), ("Wp_1d", 3)):
        rep = fp.contraction_report(quad1d8, nu, eta, times, mode, p=p)
        assert rep.constants["rate"] > 0
    # non-additive 2D potential: no product structure, W2 must refuse
    nu2 = fp.GridMeasure.point(nonadd2d.grid, (1, 1))
    eta2 = fp.GridMeasure.point(nonadd2d.grid, (8, 8))
    with pytest.raises(fp.HypothesisError):
        fp.contraction_report(nonadd2d, nu2, eta2, times, "W2", p=2)
    # quantile mode is one-dimensional only
    with pytest.raises(fp.HypothesisError):
        fp.contraction_report(nonadd2d, nu2, eta2, times, "Wp_1d", p=2)
    # flat potential has no convexity modulus
    nuf = fp.GridMeasure.point(flat1d4.grid, (1,))
    etaf = fp.GridMeasure.point(flat1d4.grid, (4,))
    with pytest.raises(fp.HypothesisError):
        fp.contraction_report(flat1d4, nuf, etaf, times, "W2", p=2)


def test_contraction_report_columns(quad1d8):
    grid = quad1d8.grid
    nu = fp.GridMeasure.point(grid, (2,))
    eta = fp.GridMeasure.point(grid, (7,))
    times = np.array([0.0, 0.3, 0.9])
    cert = fp.decay_certificate(quad1d8)
    rep = fp.contraction_report(quad1d8, nu, eta, times, "W1_graph", certificate=cert)
    rows = list(rep.rows())
    assert len(rows) == 3
    d0 = rows[0][1]
    for (t, dist, bound, excess) in rows:
        assert bound == pytest.approx(np.exp(-cert.kappa_1 * t) * d0, rel=1e-12)
        assert excess == pytest.approx(dist - bound, abs=1e-14)
    # graph contraction certified by the one-sided gaps: no positive excess
    assert all(r[3] <= 1e-8 for r in rows)


def test_contraction_discrete_steps_match_kernel_power(quad1d8):
    grid = quad1d8.grid
    nu = fp.GridMeasure.point(grid, (2,))
    eta = fp.GridMeasure.point(grid, (7,))
    kernel = fp.build_kernel(quad1d8)
    rep = fp.contraction_report(quad1d8, nu, eta, np.array([0, 3, 6]), "W1_graph",
                                kernel=kernel, discrete=True)
    mu = nu
    for _ in range(3):
        mu = kernel.measure_step(mu)
    nu3 = mu
    mu = eta
    for _ in range(3):
        mu = kernel.measure_step(mu)
    eta3 = mu
    direct, _ = fp.wasserstein(fp.TransportProblem(nu3, eta3, cost="graph", p=1))
    assert list(rep.rows())[1][1] == pytest.approx(direct, rel=1e-10)
