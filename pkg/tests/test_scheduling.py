"""Tests for day-ahead, master and real-time problems and compact forms."""

from __future__ import annotations

import numpy as np
import pytest

from reserveflow.forecast import ReserveRequirement
from reserveflow.lp import SolverOptions, solve_lp
from reserveflow.scheduling import (
    InfeasibleScheduleError,
    RtProblem,
    build_compact_forms,
    solve_da,
    solve_master,
    solve_rt,
)

from conftest import random_demand, random_grid

NO_RESERVES = ReserveRequirement(rho_plus=0.0, rho_minus=0.0, alpha=0.5)


def req(plus, minus, alpha=0.95):
    return ReserveRequirement(rho_plus=plus, rho_minus=minus, alpha=alpha)


# -- day-ahead ----------------------------------------------------------------

def test_da_zero_demand_zero_requirements(two_bus_grid):
    da = solve_da(two_bus_grid, np.zeros(2), NO_RESERVES)
    assert np.allclose(da.p, 0.0)
    assert np.allclose(da.r_plus, 0.0)
    assert np.allclose(da.r_minus, 0.0)
    assert da.objective == pytest.approx(0.0, abs=1e-9)
    assert da.eta == 0.0


def test_da_merit_order_without_congestion(two_bus_grid):
    d = np.array([0.0, 100.0])
    da = solve_da(two_bus_grid, d, NO_RESERVES)
    assert da.p[0] == pytest.approx(100.0, abs=1e-8)  # cheap unit carries all
    assert da.p[1] == pytest.approx(0.0, abs=1e-8)
    assert da.objective == pytest.approx(1000.0, abs=1e-6)
    assert da.flows[0] == pytest.approx(100.0, abs=1e-8)


def test_da_congestion_splits_dispatch(two_bus_grid):
    d = np.array([0.0, 200.0])  # line limit 120 forces 80 MW onto G2
    da = solve_da(two_bus_grid, d, NO_RESERVES)
    assert da.p[0] == pytest.approx(120.0, abs=1e-8)
    assert da.p[1] == pytest.approx(80.0, abs=1e-8)
    assert abs(da.flows[0]) <= 120.0 + 1e-8


def test_da_schedule_invariants(three_bus_grid):
    d = np.array([50.0, 120.0, 60.0])
    da = solve_da(three_bus_grid, d, req(40.0, -35.0))
    g = three_bus_grid
    assert np.all(da.p >= -1e-9)
    assert np.all(da.p + da.r_plus <= g.p_max + 1e-8)
    assert np.all(da.p - da.r_minus >= g.p_min - 1e-8)
    assert np.all(da.r_plus >= -1e-9) and np.all(da.r_minus >= -1e-9)
    assert da.p.sum() == pytest.approx(d.sum(), abs=1e-7)
    assert da.r_plus.sum() >= 40.0 - 1e-8
    assert da.r_minus.sum() >= 35.0 - 1e-8
    assert np.all(np.abs(da.flows) <= g.f_max + 1e-7)


def test_da_infeasible_reports_binding_side(two_bus_grid):
    with pytest.raises(InfeasibleScheduleError) as err:
        solve_da(two_bus_grid, np.array([0.0, 700.0]), NO_RESERVES)
    assert err.value.reason == "energy-capacity"
    with pytest.raises(InfeasibleScheduleError) as err:
        solve_da(two_bus_grid, np.array([0.0, 500.0]), req(150.0, -10.0))
    assert err.value.reason == "up-reserve"


def test_da_curtailment_relieves_congestion(two_bus_grid):
    # 180 MW of load at bus 2 offset by 100 MW of VRE at bus 1: net demand
    # is (-100, 180) and the line can only carry 120, so the model must
    # curtail VRE at bus 1 unless generation at bus 2 covers the gap.
    d = np.array([-100.0, 180.0])
    vre = np.array([100.0, 0.0])
    da = solve_da(two_bus_grid, d, NO_RESERVES, vre=vre)
    assert da.curtailment is not None
    assert np.all(da.curtailment <= vre + 1e-9)
    assert abs(da.flows[0]) <= 120.0 + 1e-8
    # energy balance accounts for curtailed VRE as extra net demand
    assert da.p.sum() == pytest.approx(d.sum() + da.curtailment.sum(),
                                       abs=1e-7)


# -- master ---------------------------------------------------------------------

def test_master_empty_scenarios_equals_da(three_bus_grid):
    d = np.array([40.0, 90.0, 30.0])
    r = req(30.0, -25.0)
    da = solve_da(three_bus_grid, d, r)
    master = solve_master(three_bus_grid, d, r, [])
    assert master.objective == da.objective
    assert np.array_equal(master.p, da.p)
    assert np.array_equal(master.r_plus, da.r_plus)
    assert np.array_equal(master.r_minus, da.r_minus)
    assert master.eta == 0.0


def test_master_zero_scenario_roomy_limits(three_bus_grid):
    d = np.array([40.0, 90.0, 30.0])
    r = req(30.0, -25.0)
    da = solve_da(three_bus_grid, d, r)
    master = solve_master(three_bus_grid, d, r, [np.zeros(3)])
    assert master.eta == pytest.approx(0.0, abs=1e-9)
    assert master.objective == pytest.approx(da.objective, abs=1e-7)


def test_master_total_objective_monotone_in_scenarios():
    rng = np.random.default_rng(42)
    for _ in range(5):
        grid = random_grid(rng, n_nodes=4, congested=True)
        d = random_demand(rng, grid)
        r = req(0.15 * d.sum(), -0.15 * d.sum())
        scen1 = rng.normal(scale=0.08 * d.sum(), size=4)
        scen2 = rng.normal(scale=0.08 * d.sum(), size=4)
        try:
            m0 = solve_master(grid, d, r, [])
            m1 = solve_master(grid, d, r, [scen1])
            m2 = solve_master(grid, d, r, [scen1, scen2])
        except InfeasibleScheduleError:
            continue
        assert m1.total_objective >= m0.total_objective - 1e-7
        assert m2.total_objective >= m1.total_objective - 1e-7


def test_master_eta_positive_when_scenario_undeliverable(two_bus_grid):
    # realized demand at bus 2 of 600 MW exceeds local capacity (300) plus
    # line capacity (120); no schedule admits slack-free recourse
    d = np.array([0.0, 100.0])
    r = req(10.0, -10.0)
    xi = np.array([0.0, 500.0])
    master = solve_master(two_bus_grid, d, r, [xi])
    assert master.eta > 1000.0


# -- real-time --------------------------------------------------------------------

def test_rt_zero_error_zero_cost(three_bus_grid):
    d = np.array([50.0, 120.0, 60.0])
    da = solve_da(three_bus_grid, d, req(40.0, -35.0))
    out = solve_rt(three_bus_grid, da, np.zeros(3))
    assert out.violation_cost == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(out.p_rec, 0.0, atol=1e-8)
    assert out.max_slack() <= 1e-9


def test_rt_balance_and_slack_counting(three_bus_grid):
    d = np.array([50.0, 120.0, 60.0])
    da = solve_da(three_bus_grid, d, req(40.0, -35.0))
    xi = np.array([30.0, 40.0, 20.0])  # aggregate 90 > procured 40
    out = solve_rt(three_bus_grid, da, xi)
    assert out.p_rec.sum() == pytest.approx(xi.sum(), abs=1e-7)
    shortfall = xi.sum() - da.r_plus.sum()
    assert out.g_plus.sum() >= shortfall - 1e-6
    assert out.violation_cost > 0


def test_rt_violation_zero_iff_slack_free(three_bus_grid):
    rng = np.random.default_rng(3)
    d = np.array([50.0, 120.0, 60.0])
    da = solve_da(three_bus_grid, d, req(40.0, -35.0))
    for _ in range(20):
        xi = rng.normal(scale=15.0, size=3)
        out = solve_rt(three_bus_grid, da, xi)
        assert (out.violation_cost <= 1e-6) == (out.max_slack() <= 1e-8)
        if out.violation_cost <= 1e-6:
            assert np.all(np.abs(out.flows) <=
                          three_bus_grid.f_max + 2e-6)


def test_rt_cost_convex_along_segments(three_bus_grid):
    rng = np.random.default_rng(9)
    d = np.array([50.0, 120.0, 60.0])
    da = solve_da(three_bus_grid, d, req(30.0, -30.0))
    prob = RtProblem(three_bus_grid, da)
    for _ in range(10):
        a = rng.normal(scale=40.0, size=3)
        b = rng.normal(scale=40.0, size=3)
        mid = 0.5 * (a + b)
        va = prob.solve(a).violation_cost
        vb = prob.solve(b).violation_cost
        vm = prob.solve(mid).violation_cost
        assert vm <= 0.5 * (va + vb) + 1e-6


def test_rt_line_report_identifies_binding_lines(two_bus_grid):
    d = np.array([0.0, 100.0])
    da = solve_da(two_bus_grid, d, req(50.0, -50.0))
    out = solve_rt(two_bus_grid, da, np.array([0.0, 80.0]))
    report = {ll.line_id: ll for ll in out.line_report}
    assert report["L1"].binding or out.max_slack() > 0


# -- compact forms ----------------------------------------------------------------

def test_compact_row_census(three_bus_grid):
    comp = build_compact_forms(three_bus_grid, np.zeros(3))
    g, l = three_bus_grid.n_gens, three_bus_grid.n_lines
    assert comp.n_rows == 2 + 2 * l + 2 * g
    kinds = [m[0] for m in comp.row_meta]
    assert kinds.count("balance") == 2
    assert kinds.count("flow") == 2 * l
    assert kinds.count("reserve") == 2 * g


def test_compact_balance_rows_of_e_matrix(three_bus_grid):
    comp = build_compact_forms(three_bus_grid, np.zeros(3))
    assert np.array_equal(comp.e_mat[0], np.ones(3))
    assert np.array_equal(comp.e_mat[1], -np.ones(3))
    assert not comp.slack_rows[0] and not comp.slack_rows[1]
    assert np.isinf(comp.pi_upper[0]) and np.isinf(comp.pi_upper[1])


def test_compact_matches_direct_rt_on_random_pairs():
    rng = np.random.default_rng(100)
    grids = [random_grid(rng, 4, congested=True) for _ in range(2)]
    for grid in grids:
        d = random_demand(rng, grid)
        r = req(0.1 * d.sum(), -0.1 * d.sum())
        try:
            da = solve_da(grid, d, r)
        except InfeasibleScheduleError:
            continue
        comp = build_compact_forms(grid, d, requirement=r)
        x = da.x_vector(with_curtailment=False)
        assert comp.first_stage_residual(x) <= 1e-6
        for _ in range(50):
            xi = rng.normal(scale=0.1 * d.sum(), size=grid.n_nodes)
            direct = solve_rt(grid, da, xi)
            sol = solve_lp(comp.rt_lp(x, xi), SolverOptions())
            assert sol.objective == pytest.approx(direct.violation_cost,
                                                  abs=1e-8)
