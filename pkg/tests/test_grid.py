"""Tests for grid topology, PTDF construction and scheduled flows."""

from __future__ import annotations

import numpy as np
import pytest

from reserveflow.grid import (
    Generator,
    GridError,
    GridModel,
    Line,
    Node,
    compute_ptdf,
    scheduled_flows,
)

from oracles import dc_flows_from_angles


def two_bus():
    nodes = [Node("1"), Node("2")]
    lines = [Line("L1", "1", "2", reactance=0.1, f_max=150.0)]
    gens = [Generator("G1", "1", 0.0, 300.0, 10.0, 2.0, 2.0)]
    return GridModel(nodes, lines, gens)


def triangle(slack="1"):
    nodes = [Node(str(i)) for i in (1, 2, 3)]
    lines = [Line("L12", "1", "2", 0.1, 100.0),
             Line("L23", "2", "3", 0.1, 100.0),
             Line("L31", "3", "1", 0.1, 100.0)]
    gens = [Generator("G1", "1", 0.0, 500.0, 5.0, 1.0, 1.0)]
    return GridModel(nodes, lines, gens, slack_bus=slack)


def test_two_bus_ptdf_row():
    g = two_bus()
    assert np.allclose(g.ptdf, [[0.0, -1.0]], atol=1e-12)


def test_triangle_flow_split_matches_angle_oracle():
    g = triangle()
    q = np.array([0.0, 1.0, 0.0])
    q_balanced = q - q.mean()  # withdraw uniformly to balance
    flows = g.ptdf @ q_balanced
    oracle = dc_flows_from_angles(3, g.line_endpoints(),
                                  [ln.reactance for ln in g.lines],
                                  g.node_index[g.slack_bus], q_balanced)
    assert np.allclose(flows, oracle, atol=1e-10)
    # injection at 2 leaves over the short path 2->1 two thirds of the time
    flows_inj2 = g.ptdf[:, 1]
    assert flows_inj2[0] == pytest.approx(-2.0 / 3.0, abs=1e-10)
    assert flows_inj2[1] == pytest.approx(1.0 / 3.0, abs=1e-10)


def test_ptdf_slack_column_zero_and_zero_injection():
    g = triangle()
    assert np.allclose(g.ptdf[:, g.node_index[g.slack_bus]], 0.0)
    assert np.allclose(g.ptdf @ np.zeros(3), 0.0)


def test_flow_conservation_on_random_balanced_injections():
    g = triangle()
    rng = np.random.default_rng(4)
    incidence = np.zeros((g.n_lines, g.n_nodes))
    for l, (f, t) in enumerate(g.line_endpoints()):
        incidence[l, f], incidence[l, t] = 1.0, -1.0
    for _ in range(25):
        q = rng.normal(size=3)
        q -= q.mean()
        flows = g.ptdf @ q
        # net flow out of each bus equals its injection
        assert np.allclose(incidence.T @ flows, q, atol=1e-9)


def test_slack_choice_does_not_change_balanced_flows():
    a = triangle(slack="1")
    b = triangle(slack="3")
    rng = np.random.default_rng(8)
    q = rng.normal(size=3)
    q -= q.mean()
    assert np.allclose(a.ptdf @ q, b.ptdf @ q, atol=1e-9)
    assert not np.allclose(a.ptdf, b.ptdf)  # the matrices themselves differ


def test_scheduled_flows_collocated_and_single_path():
    g = two_bus()
    # generation collocated with demand -> no flow
    g2 = GridModel([Node("1"), Node("2")],
                   [Line("L1", "1", "2", 0.1, 150.0)],
                   [Generator("G1", "1", 0.0, 300.0, 10.0, 2.0, 2.0),
                    Generator("G2", "2", 0.0, 300.0, 12.0, 2.0, 2.0)])
    f = scheduled_flows(g2, np.array([40.0, 60.0]), np.array([40.0, 60.0]))
    assert np.allclose(f, 0.0, atol=1e-12)
    # 100 MW generated at bus 1 serving bus 2 -> 100 MW on the line
    f = scheduled_flows(g, np.array([100.0]), np.array([0.0, 100.0]))
    assert f[0] == pytest.approx(100.0, abs=1e-9)


def test_scheduled_flows_rejects_imbalance():
    g = two_bus()
    with pytest.raises(GridError, match="unbalanced"):
        scheduled_flows(g, np.array([100.0]), np.array([0.0, 50.0]))


def test_disconnected_grid_lists_components():
    nodes = [Node(str(i)) for i in (1, 2, 3, 4)]
    lines = [Line("L12", "1", "2", 0.1, 10.0),
             Line("L34", "3", "4", 0.1, 10.0)]
    with pytest.raises(GridError, match="2 components") as err:
        GridModel(nodes, lines, [])
    assert "{1, 2}" in str(err.value) and "{3, 4}" in str(err.value)


def test_bad_parameters_rejected():
    nodes = [Node("1"), Node("2")]
    with pytest.raises(GridError, match="reactance"):
        GridModel(nodes, [Line("L", "1", "2", -0.1, 10.0)], [])
    with pytest.raises(GridError, match="flow limit"):
        GridModel(nodes, [Line("L", "1", "2", 0.1, 0.0)], [])
    with pytest.raises(GridError, match="unknown node"):
        GridModel(nodes, [Line("L", "1", "9", 0.1, 10.0)], [])
    with pytest.raises(GridError, match="p_min > p_max"):
        GridModel(nodes, [Line("L", "1", "2", 0.1, 10.0)],
                  [Generator("G", "1", 10.0, 5.0, 1.0, 1.0, 1.0)])


def test_gen_incidence_one_per_column():
    g = triangle()
    a = g.gen_incidence
    assert a.shape == (3, 1)
    assert np.array_equal(a.sum(axis=0), np.ones(1))
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_default_slack_is_lowest_node_id():
    g = GridModel([Node("7"), Node("2"), Node("10")],
                  [Line("a", "7", "2", 0.1, 10.0),
                   Line("b", "2", "10", 0.1, 10.0)], [])
    assert g.slack_bus == "2"


def test_compute_ptdf_matches_oracle_on_random_networks():
    rng = np.random.default_rng(12)
    for _ in range(10):
        n = 6
        ends = [(i, i + 1) for i in range(n - 1)]
        ends += [(0, 3), (1, 4)]  # chords
        xs = rng.uniform(0.05, 0.4, size=len(ends))
        ptdf = compute_ptdf(n, ends, xs, slack=0)
        q = rng.normal(size=n)
        q -= q.mean()
        oracle = dc_flows_from_angles(n, ends, xs, 0, q)
        assert np.allclose(ptdf @ q, oracle, atol=1e-9)
