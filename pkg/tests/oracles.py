"""Independent brute-force oracles used to pin expected values in tests.

Everything here is deliberately written from first principles (enumeration,
dense linear algebra, sorting) so it shares no code path with the package.
"""

from __future__ import annotations

import itertools

import numpy as np


def lp_vertex_objective(cost, a_matrix, relations, rhs, lower, upper):
    """Optimal objective of a small box-bounded min-LP by vertex enumeration.

    Treats every row and every finite bound as a candidate active constraint,
    solves each n-subset as equalities, filters feasible points, and returns
    the best objective (None if no feasible vertex exists).  Only sensible
    for a handful of variables.
    """
    a_matrix = np.asarray(a_matrix, dtype=float)
    m, n = a_matrix.shape
    rows = [(a_matrix[i], rhs[i]) for i in range(m)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lower[j]):
            rows.append((e.copy(), lower[j]))
        if np.isfinite(upper[j]):
            rows.append((e.copy(), upper[j]))
    best = None
    for combo in itertools.combinations(range(len(rows)), n):
        a_act = np.array([rows[i][0] for i in combo])
        b_act = np.array([rows[i][1] for i in combo])
        try:
            x = np.linalg.solve(a_act, b_act)
        except np.linalg.LinAlgError:
            continue
        if not _feasible(x, a_matrix, relations, rhs, lower, upper):
            continue
        val = float(np.dot(cost, x))
        if best is None or val < best:
            best = val
    return best


def _feasible(x, a_matrix, relations, rhs, lower, upper, tol=1e-7):
    ax = a_matrix @ x
    for i, rel in enumerate(relations):
        if rel == "<=" and ax[i] > rhs[i] + tol:
            return False
        if rel == ">=" and ax[i] < rhs[i] - tol:
            return False
        if rel == "=" and abs(ax[i] - rhs[i]) > tol:
            return False
    return bool(np.all(x >= lower - tol) and np.all(x <= upper + tol))


def dc_flows_from_angles(n_nodes, line_ends, reactances, slack, injections):
    """Line flows of a balanced injection via the angle formulation.

    Solves B theta = q with the slack angle pinned to zero and reads flows
    off the angle differences; independent of any PTDF construction.
    """
    b_bus = np.zeros((n_nodes, n_nodes))
    for (f, t), x in zip(line_ends, reactances):
        w = 1.0 / x
        b_bus[f, f] += w
        b_bus[t, t] += w
        b_bus[f, t] -= w
        b_bus[t, f] -= w
    keep = [i for i in range(n_nodes) if i != slack]
    theta = np.zeros(n_nodes)
    theta[keep] = np.linalg.solve(b_bus[np.ix_(keep, keep)],
                                  np.asarray(injections, dtype=float)[keep])
    return np.array([(theta[f] - theta[t]) / x
                     for (f, t), x in zip(line_ends, reactances)])


def sort_quantile_linear(samples, u):
    """Type-7 quantile recomputed directly from the sorted sample."""
    xs = np.sort(np.asarray(samples, dtype=float))
    k = xs.size
    h = (k - 1) * u
    lo = int(np.floor(h))
    hi = min(lo + 1, k - 1)
    return float(xs[lo] + (h - lo) * (xs[hi] - xs[lo]))


def box_slab_vertices_2d(lower, upper, rho_minus, rho_plus, grid=400):
    """Fine-grid feasible cloud of a 2-D box-and-slab set (for projections)."""
    xs = np.linspace(lower[0], upper[0], grid)
    ys = np.linspace(lower[1], upper[1], grid)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    agg = pts.sum(axis=1)
    return pts[(agg >= rho_minus) & (agg <= rho_plus)]


def box_slab_vertices_bruteforce(lower, upper, rho_minus, rho_plus):
    """Vertices of a box-and-slab polytope by constraint-pair intersection.

    Every d-subset of candidate active constraints (coordinate bounds plus
    the two aggregate faces) is solved as an equality system; feasible
    solutions are collected and deduplicated.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    rows = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        rows.append((e.copy(), lower[j]))
        rows.append((e.copy(), upper[j]))
    ones = np.ones(d)
    rows.append((ones.copy(), rho_minus))
    rows.append((ones.copy(), rho_plus))
    found = []
    for combo in itertools.combinations(range(len(rows)), d):
        a = np.array([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        x = np.linalg.solve(a, b)
        if np.any(x < lower - 1e-9) or np.any(x > upper + 1e-9):
            continue
        agg = x.sum()
        if not (rho_minus - 1e-9 <= agg <= rho_plus + 1e-9):
            continue
        if not any(np.max(np.abs(x - y)) <= 1e-7 for y in found):
            found.append(x)
    return found
