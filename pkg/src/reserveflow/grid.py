"""Physical system model: buses, lines, generators, PTDF and incidence maps.

A ``GridModel`` is immutable once built.  The PTDF matrix maps nodal
injection deviations to DC line flows; its slack column is identically zero,
and flows of balanced injections do not depend on the slack choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid data (disconnected topology, bad limits, unknown ids)."""


@dataclass(frozen=True)
class Node:
    id: str
    zone: str = "1"


@dataclass(frozen=True)
class Line:
    id: str
    from_node: str
    to_node: str
    reactance: float  # p.u.
    f_max: float      # MW


@dataclass(frozen=True)
class Generator:
    id: str
    node: str
    p_min: float       # MW
    p_max: float       # MW
    cost_energy: float  # $/MWh
    cost_res_up: float  # $/MW/h
    cost_res_down: float  # $/MW/h


def _sort_key(node_id: str):
    try:
        return (0, int(node_id))
    except ValueError:
        return (1, node_id)


class GridModel:
    """Validated grid with cached PTDF and generator incidence.

    Node/line/generator order follows the order of the input sequences and
    defines the index convention used by every vector in the package.
    """

    def __init__(self, nodes, lines, generators, slack_bus: str | None = None):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.lines: tuple[Line, ...] = tuple(lines)
        self.generators: tuple[Generator, ...] = tuple(generators)
        self.node_index = {nd.id: i for i, nd in enumerate(self.nodes)}
        self.line_index = {ln.id: i for i, ln in enumerate(self.lines)}
        if len(self.node_index) != len(self.nodes):
            raise GridError("duplicate node ids")
        if len(self.line_index) != len(self.lines):
            raise GridError("duplicate line ids")
        if len({g.id for g in self.generators}) != len(self.generators):
            raise GridError("duplicate generator ids")
        if slack_bus is None:
            slack_bus = min((nd.id for nd in self.nodes), key=_sort_key)
        if slack_bus not in self.node_index:
            raise GridError(f"slack bus {slack_bus!r} is not a node")
        self.slack_bus = slack_bus

        self._validate()
        ends = [(self.node_index[ln.from_node], self.node_index[ln.to_node])
                for ln in self.lines]
        self.ptdf = compute_ptdf(
            self.n_nodes, ends, [ln.reactance for ln in self.lines],
            self.node_index[slack_bus])
        self.ptdf.setflags(write=False)
        a = np.zeros((self.n_nodes, self.n_gens))
        for j, g in enumerate(self.generators):
            a[self.node_index[g.node], j] = 1.0
        a.setflags(write=False)
        self.gen_incidence = a

    # -- sizes and vectors ---------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @property
    def f_max(self) -> np.ndarray:
        return np.array([ln.f_max for ln in self.lines])

    @property
    def p_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators])

    @property
    def p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators])

    @property
    def cost_energy(self) -> np.ndarray:
        return np.array([g.cost_energy for g in self.generators])

    @property
    def cost_res_up(self) -> np.ndarray:
        return np.array([g.cost_res_up for g in self.generators])

    @property
    def cost_res_down(self) -> np.ndarray:
        return np.array([g.cost_res_down for g in self.generators])

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(nd.id for nd in self.nodes)

    @property
    def line_ids(self) -> tuple[str, ...]:
        return tuple(ln.id for ln in self.lines)

    @property
    def gen_ids(self) -> tuple[str, ...]:
        return tuple(g.id for g in self.generators)

    # -- validation ------------------------------------------------------------

    def _validate(self) -> None:
        if not self.nodes:
            raise GridError("grid has no nodes")
        for ln in self.lines:
            for end in (ln.from_node, ln.to_node):
                if end not in self.node_index:
                    raise GridError(f"line {ln.id!r} references unknown node {end!r}")
            if ln.reactance <= 0:
                raise GridError(f"line {ln.id!r} has non-positive reactance")
            if ln.f_max <= 0:
                raise GridError(f"line {ln.id!r} has non-positive flow limit")
        for g in self.generators:
            if g.node not in self.node_index:
                raise GridError(f"generator {g.id!r} sits at unknown node {g.node!r}")
            if g.p_min > g.p_max:
                raise GridError(f"generator {g.id!r} has p_min > p_max")
            if min(g.cost_energy, g.cost_res_up, g.cost_res_down) < 0:
                raise GridError(f"generator {g.id!r} has negative costs")
        comps = self.components()
        if len(comps) > 1:
            named = ["{" + ", ".join(sorted(c, key=_sort_key)) + "}" for c in comps]
            raise GridError(
                f"grid is disconnected into {len(comps)} components: "
                + "; ".join(named))

    def components(self) -> list[set[str]]:
        """Connected components of the node graph (union-find)."""
        parent = {nd.id: nd.id for nd in self.nodes}

        def find(u):
            while parent[u] != u:
                parent[u] = parent[parent[u]]
                u = parent[u]
            return u

        for ln in self.lines:
            ru, rv = find(ln.from_node), find(ln.to_node)
            if ru != rv:
                parent[ru] = rv
        groups: dict[str, set[str]] = {}
        for nd in self.nodes:
            groups.setdefault(find(nd.id), set()).add(nd.id)
        return list(groups.values())

    def line_endpoints(self) -> list[tuple[int, int]]:
        return [(self.node_index[ln.from_node], self.node_index[ln.to_node])
                for ln in self.lines]


def compute_ptdf(n_nodes: int, line_ends, reactances, slack: int) -> np.ndarray:
    """PTDF matrix of a connected DC network (slack column all zeros).

    line_ends are (from, to) node indices; flow sign is positive from->to.
    """
    reactances = np.asarray(reactances, dtype=float)
    if np.any(reactances <= 0):
        raise GridError("non-positive reactance")
    n_lines = len(line_ends)
    incidence = np.zeros((n_lines, n_nodes))
    for l, (f, t) in enumerate(line_ends):
        incidence[l, f] = 1.0
        incidence[l, t] = -1.0
    weights = 1.0 / reactances
    b_flow = incidence * weights[:, None]
    b_bus = incidence.T @ b_flow
    keep = [i for i in range(n_nodes) if i != slack]
    reduced = b_bus[np.ix_(keep, keep)]
    try:
        inv = np.linalg.inv(reduced)
    except np.linalg.LinAlgError as exc:
        raise GridError("singular susceptance matrix: topology is not "
                        "connected") from exc
    ptdf = np.zeros((n_lines, n_nodes))
    ptdf[:, keep] = b_flow[:, keep] @ inv
    return ptdf


def susceptance_condition(grid: GridModel) -> float:
    """Condition number of the reduced susceptance matrix (PTDF health)."""
    n = grid.n_nodes
    b_bus = np.zeros((n, n))
    for ln in grid.lines:
        f, t = grid.node_index[ln.from_node], grid.node_index[ln.to_node]
        w = 1.0 / ln.reactance
        b_bus[f, f] += w
        b_bus[t, t] += w
        b_bus[f, t] -= w
        b_bus[t, f] -= w
    keep = [i for i in range(n) if i != grid.node_index[grid.slack_bus]]
    return float(np.linalg.cond(b_bus[np.ix_(keep, keep)]))


def scheduled_flows(grid: GridModel, p: np.ndarray, d_hat: np.ndarray,
                    feas_tol: float = 1e-8) -> np.ndarray:
    """DC line flows of dispatch p against nodal net demand d_hat.

    The injection A p - d_hat must be balanced; imbalance is an input error,
    not something the DC model can absorb.
    """
    p = np.asarray(p, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    injection = grid.gen_incidence @ p - d_hat
    imbalance = float(injection.sum())
    scale = max(1.0, float(np.abs(d_hat).sum()))
    if abs(imbalance) > feas_tol * scale:
        raise GridError(f"unbalanced injection: surplus of {imbalance:.6g} MW")
    return grid.ptdf @ injection
