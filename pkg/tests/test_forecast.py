"""Tests for quantiles, reserve requirements, the uncertainty set,
projection and linear maximization."""

from __future__ import annotations

import numpy as np
import pytest

from reserveflow.forecast import (
    ReserveRequirement,
    ScenarioSet,
    UncertaintySet,
    UncertaintySetError,
    allocation_factors,
    build_uncertainty_set,
    empirical_quantile,
    maximize_linear_over_set,
    project_onto_set,
    reserve_requirements,
)
from reserveflow.lp import GE, LE, LinearProgram, SolverOptions, solve_lp

from oracles import sort_quantile_linear

IVB_COV = np.array([[0.141, 0.001], [0.001, 0.141]])  # pu^2 on a 100 MVA base


def scenario_set(errors, node_ids=None, forecast=None):
    errors = np.asarray(errors, dtype=float)
    n = errors.shape[1]
    node_ids = tuple(node_ids or (str(i + 1) for i in range(n)))
    forecast = np.zeros(n) if forecast is None else forecast
    return ScenarioSet(errors=errors, point_forecast=forecast,
                       node_ids=node_ids)


def gaussian_scenarios(k, seed=0, cov=IVB_COV, base=100.0):
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(np.zeros(2), cov, size=k) * base
    return scenario_set(draws)


# -- quantiles ---------------------------------------------------------------

def test_quantile_linear_interpolation_midpoint():
    samples = np.arange(1, 101, dtype=float)
    assert empirical_quantile(samples, 0.5) == pytest.approx(50.5, abs=1e-12)


def test_quantile_constant_sample():
    assert empirical_quantile(np.full(7, 3.25), 0.9) == 3.25
    assert empirical_quantile(np.full(7, 3.25), 0.1) == 3.25


def test_quantile_monte_carlo_coverage():
    rng = np.random.default_rng(42)
    draws = rng.standard_normal(100_000)
    q = empirical_quantile(draws, 0.975)
    assert abs(q - 1.96) < 0.05


def test_quantile_matches_sort_oracle_and_counts():
    rng = np.random.default_rng(1)
    xs = rng.normal(size=1000)
    for u in (0.05, 0.25, 0.5, 0.975):
        q = empirical_quantile(xs, u)
        assert q == pytest.approx(sort_quantile_linear(xs, u), abs=1e-12)
        assert np.sum(xs <= q) >= int(np.ceil(u * xs.size)) - 1
    q = empirical_quantile(xs, 0.9, method="nearest-rank")
    assert np.sum(xs <= q) >= int(np.ceil(0.9 * xs.size))


def test_quantile_rejects_bad_input():
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0, 2.0], 1.5)


# -- reserve requirements ------------------------------------------------------

def test_requirements_all_zero_scenarios():
    req = reserve_requirements(scenario_set(np.zeros((5, 2))), alpha=0.95)
    assert req.rho_plus == 0.0 and req.rho_minus == 0.0


def test_requirements_symmetric_two_scenarios():
    req = reserve_requirements(scenario_set([[3.0, 0.0], [-3.0, 0.0]]),
                               alpha=0.5)
    assert req.rho_plus == pytest.approx(-req.rho_minus, abs=1e-12)


def test_requirements_match_sort_oracle_on_gaussian():
    scen = gaussian_scenarios(1000, seed=7)
    req = reserve_requirements(scen, alpha=0.95)
    agg = scen.errors.sum(axis=1)
    assert req.rho_plus == pytest.approx(sort_quantile_linear(agg, 0.975),
                                         abs=1e-12)
    assert req.rho_minus == pytest.approx(sort_quantile_linear(agg, 0.025),
                                          abs=1e-12)
    inside = np.mean((agg >= req.rho_minus) & (agg <= req.rho_plus))
    assert inside >= 0.95 - 2.0 / 1000


def test_requirements_permutation_invariant():
    scen = gaussian_scenarios(200, seed=3)
    rng = np.random.default_rng(0)
    perm = rng.permutation(scen.errors.shape[0])
    shuffled = scenario_set(scen.errors[perm])
    a = reserve_requirements(scen, 0.9)
    b = reserve_requirements(shuffled, 0.9)
    assert (a.rho_plus, a.rho_minus) == (b.rho_plus, b.rho_minus)


# -- uncertainty set construction ------------------------------------------------

def test_build_set_box_is_min_max():
    scen = gaussian_scenarios(500, seed=5)
    req = reserve_requirements(scen, 0.95)
    uset = build_uncertainty_set(scen, req)
    assert np.array_equal(uset.lower, scen.errors.min(axis=0))
    assert np.array_equal(uset.upper, scen.errors.max(axis=0))


def test_build_set_single_repeated_scenario_is_singleton():
    xi = np.array([4.0, -1.0])
    scen = scenario_set(np.tile(xi, (3, 1)))
    req = ReserveRequirement(rho_plus=5.0, rho_minus=-5.0, alpha=0.9)
    uset = build_uncertainty_set(scen, req)
    assert uset.contains(xi)
    assert np.array_equal(uset.project(xi + 10.0), xi)


def test_box_shrinks_when_extreme_scenario_removed():
    scen = gaussian_scenarios(100, seed=11)
    req = reserve_requirements(scen, 0.9)
    full = build_uncertainty_set(scen, req)
    j = 0
    k_star = int(np.argmax(scen.errors[:, j]))
    reduced = scenario_set(np.delete(scen.errors, k_star, axis=0))
    shrunk = build_uncertainty_set(reduced, req)
    assert shrunk.upper[j] <= full.upper[j]


def test_empty_intersection_raises():
    with pytest.raises(UncertaintySetError, match="empty"):
        UncertaintySet(lower=np.array([1.0, 1.0]), upper=np.array([2.0, 2.0]),
                       rho_minus=-5.0, rho_plus=0.5, node_ids=("1", "2"))


# -- membership ---------------------------------------------------------------

def test_contains_origin_and_slab_cut():
    uset = UncertaintySet(lower=np.array([-2.0, -2.0]),
                          upper=np.array([2.0, 2.0]),
                          rho_minus=-3.0, rho_plus=3.0, node_ids=("1", "2"))
    assert uset.contains(np.zeros(2))
    assert not uset.contains(uset.upper)  # aggregate 4 > 3: slab cuts corner
    assert uset.contains(np.array([2.0, 1.0]))


def test_membership_fraction_matches_inequality_oracle():
    scen = gaussian_scenarios(1000, seed=13)
    req = reserve_requirements(scen, 0.95)
    uset = build_uncertainty_set(scen, req)
    fresh = gaussian_scenarios(1000, seed=14).errors
    mine = np.array([uset.contains(x) for x in fresh])
    agg = fresh.sum(axis=1)
    oracle = (np.all(fresh >= uset.lower - 1e-8, axis=1)
              & np.all(fresh <= uset.upper + 1e-8, axis=1)
              & (agg >= uset.rho_minus - 1e-8)
              & (agg <= uset.rho_plus + 1e-8))
    assert np.array_equal(mine, oracle)


# -- projection -----------------------------------------------------------------

def square_set(side=2.0, slab=3.0, n=2):
    return UncertaintySet(lower=np.full(n, -side), upper=np.full(n, side),
                          rho_minus=-slab, rho_plus=slab,
                          node_ids=tuple(str(i) for i in range(n)))


def test_projection_identity_inside():
    uset = square_set()
    xi = np.array([0.5, -1.0])
    assert np.array_equal(uset.project(xi), xi)


def test_projection_box_only_violation_is_clip():
    uset = square_set()
    xi = np.array([5.0, -9.0])
    assert np.array_equal(uset.project(xi), np.array([2.0, -2.0]))


def test_projection_exactly_idempotent_and_feasible():
    rng = np.random.default_rng(21)
    for n in (2, 3, 5):
        uset = square_set(side=2.0, slab=0.8 * n, n=n)
        for _ in range(200):
            xi = rng.uniform(-8, 8, size=n)
            p1 = uset.project(xi)
            assert uset.contains(p1, tol=1e-9)
            p2 = uset.project(p1)
            assert np.array_equal(p1, p2)


def test_projection_beats_random_feasible_points():
    rng = np.random.default_rng(33)
    uset = square_set(side=1.5, slab=2.0, n=3)
    for _ in range(50):
        xi = rng.uniform(-6, 6, size=3)
        proj = uset.project(xi)
        best = np.linalg.norm(proj - xi)
        for _ in range(100):
            z = rng.uniform(uset.lower, uset.upper)
            if not uset.contains(z):
                z = uset.project(z)
            assert best <= np.linalg.norm(z - xi) + 1e-9


def test_projection_matches_fine_grid_oracle_2d():
    rng = np.random.default_rng(55)
    uset = square_set(side=2.0, slab=2.5, n=2)
    for _ in range(25):
        xi = rng.uniform(-7, 7, size=2)
        proj = uset.project(xi)
        # refine a grid search around the incumbent optimum
        center, width = proj, 2.5
        best = None
        for _ in range(6):
            xs = np.linspace(center[0] - width, center[0] + width, 61)
            ys = np.linspace(center[1] - width, center[1] + width, 61)
            gx, gy = np.meshgrid(xs, ys)
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            ok = (np.all(pts >= uset.lower - 1e-12, axis=1)
                  & np.all(pts <= uset.upper + 1e-12, axis=1)
                  & (pts.sum(axis=1) >= uset.rho_minus - 1e-12)
                  & (pts.sum(axis=1) <= uset.rho_plus + 1e-12))
            pts = pts[ok]
            d = np.linalg.norm(pts - xi, axis=1)
            best = pts[int(np.argmin(d))]
            center, width = best, width / 12.0
        assert np.linalg.norm(proj - xi) <= np.linalg.norm(best - xi) + 1e-9
        assert np.allclose(proj, best, atol=1e-6)


def test_projection_nonexpansive():
    rng = np.random.default_rng(60)
    uset = square_set(side=2.0, slab=2.5, n=4)
    for _ in range(100):
        a = rng.uniform(-6, 6, size=4)
        b = rng.uniform(-6, 6, size=4)
        pa, pb = uset.project(a), uset.project(b)
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


# -- linear maximization ----------------------------------------------------------

def test_maximize_zero_vector():
    uset = square_set()
    xi, val = uset.maximize_linear(np.zeros(2))
    assert val == 0.0
    assert uset.contains(xi)


def test_maximize_box_only_when_slab_inactive():
    uset = UncertaintySet(lower=np.array([-1.0, -1.0]),
                          upper=np.array([1.0, 1.0]),
                          rho_minus=-10.0, rho_plus=10.0,
                          node_ids=("1", "2"))
    xi, val = uset.maximize_linear(np.array([2.0, -3.0]))
    assert np.array_equal(xi, np.array([1.0, -1.0]))
    assert val == pytest.approx(5.0)


def test_maximize_matches_lp_oracle():
    rng = np.random.default_rng(77)
    for n in (2, 3, 5):
        uset = square_set(side=2.0, slab=0.7 * n, n=n)
        for _ in range(30):
            w = rng.normal(size=n)
            xi, val = uset.maximize_linear(w)
            assert uset.contains(xi, tol=1e-9)
            ones = np.ones((1, n))
            lp = LinearProgram.build(
                w, np.vstack([ones, ones]), [LE, GE],
                [uset.rho_plus, uset.rho_minus],
                lower=uset.lower, upper=uset.upper, sense="max")
            ref = solve_lp(lp, SolverOptions())
            assert val == pytest.approx(ref.objective, abs=1e-8)


def test_maximize_returns_vertex_without_zero_weights():
    rng = np.random.default_rng(90)
    uset = square_set(side=1.0, slab=1.4, n=4)
    for _ in range(40):
        w = rng.normal(size=4)
        if np.any(np.abs(w) < 1e-3):
            continue
        xi, _ = uset.maximize_linear(w)
        at_bound = (xi == uset.lower) | (xi == uset.upper)
        on_slab = (abs(xi.sum() - uset.rho_plus) < 1e-9
                   or abs(xi.sum() - uset.rho_minus) < 1e-9)
        active = int(at_bound.sum()) + int(on_slab)
        assert active >= 4


# -- allocation factors ------------------------------------------------------------

def test_allocation_symmetric_nodes():
    scen = gaussian_scenarios(4000, seed=101, cov=np.array(
        [[0.10, 0.0], [0.0, 0.10]]))
    e = allocation_factors(scen, 0.975)
    assert e.sum() == pytest.approx(1.0, abs=1e-12)
    assert abs(e[0] - 0.5) < 0.05


def test_allocation_zero_quantile_node_gets_nothing():
    errors = np.column_stack([np.linspace(-1, 1, 50), np.zeros(50)])
    scen = scenario_set(errors)
    e = allocation_factors(scen, 0.975)
    assert e[1] == 0.0
    assert e[0] == pytest.approx(1.0)


def test_allocation_uniform_fallback_warns():
    scen = scenario_set(np.zeros((10, 4)))
    with pytest.warns(RuntimeWarning, match="uniform"):
        e = allocation_factors(scen, 0.975)
    assert np.allclose(e, 0.25)
