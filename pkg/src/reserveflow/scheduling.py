"""Deterministic scheduling problems: day-ahead, master with deployment
scenarios, and real-time redispatch.

The day-ahead stage picks energy and up/down reserves (optionally VRE
curtailment) at least cost.  The master adds one recourse block per
deployment scenario and an eta variable bounding the worst violation cost
across blocks.  The real-time stage redispatches against a realized error
with slack variables pricing any reserve or transmission shortfall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forecast import ReserveRequirement
from .grid import GridModel, scheduled_flows
from .lp import (
    EQ,
    LE,
    LinearProgram,
    LpError,
    LpStatus,
    SolverOptions,
    solve_lp,
)

DEFAULT_C_VIOL = 1000.0  # $/MWh penalty on slack activation


class InfeasibleScheduleError(RuntimeError):
    """Day-ahead problem infeasible; ``reason`` names the binding side."""

    def __init__(self, reason: str, detail: str):
        self.reason = reason
        super().__init__(f"{reason}: {detail}")


@dataclass(frozen=True, eq=False)
class DaSchedule:
    """First-stage decisions (MW) and their cost ($/h)."""

    p: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    objective: float              # DA cost c'x (excludes eta)
    flows: np.ndarray             # scheduled line flows f_e
    eta: float = 0.0              # master worst-case violation bound
    curtailment: np.ndarray | None = None

    @property
    def total_objective(self) -> float:
        return self.objective + self.eta

    def x_vector(self, with_curtailment: bool) -> np.ndarray:
        parts = [self.p, self.r_plus, self.r_minus]
        if with_curtailment:
            if self.curtailment is None:
                raise ValueError("schedule has no curtailment block")
            parts.append(self.curtailment)
        return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class LineLoad:
    line_id: str
    flow: float
    limit: float
    slack_up: float
    slack_down: float

    @property
    def binding(self) -> bool:
        return abs(self.flow) >= self.limit - 1e-6 or \
            max(self.slack_up, self.slack_down) > 1e-6


@dataclass(frozen=True, eq=False)
class RtOutcome:
    """Second-stage recourse and slack activation for one realized error."""

    p_rec: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    l_plus: np.ndarray
    l_minus: np.ndarray
    violation_cost: float
    flows: np.ndarray
    line_report: tuple[LineLoad, ...]

    def max_slack(self) -> float:
        return float(max(self.g_plus.max(initial=0.0),
                         self.g_minus.max(initial=0.0),
                         self.l_plus.max(initial=0.0),
                         self.l_minus.max(initial=0.0)))


# ---------------------------------------------------------------------------
# compact forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompactSecondStage:
    """Standardized second stage H x + D p_rec - s <= E xi + h.

    The two rows replacing the recourse balance equality carry no slack
    (structural zeros in s), so their dual multipliers are only bounded
    below; slack rows have duals capped at the violation penalty.  The
    first-stage polytope B x <= b and its cost vector ride along so that
    master construction and feasibility checks share one source of truth.
    """

    h_mat: np.ndarray     # (R, nx)
    d_mat: np.ndarray     # (R, n_gens)
    e_mat: np.ndarray     # (R, n_nodes)
    h_vec: np.ndarray     # (R,)
    slack_rows: np.ndarray  # bool, (R,)
    pi_upper: np.ndarray  # (R,), c_viol on slack rows, +inf on balance rows
    row_meta: tuple[tuple[str, str, str], ...]  # (kind, sign, element id)
    c_viol: float
    with_curtailment: bool
    b_mat: np.ndarray | None  # first-stage rows (needs a requirement)
    b_vec: np.ndarray | None
    cost_x: np.ndarray        # first-stage cost vector

    @property
    def n_rows(self) -> int:
        return self.h_mat.shape[0]

    @property
    def n_x(self) -> int:
        return self.h_mat.shape[1]

    @property
    def n_slack(self) -> int:
        return int(self.slack_rows.sum())

    def rt_lp(self, x_fixed: np.ndarray, xi: np.ndarray) -> LinearProgram:
        """Second-stage LP at fixed first-stage x and error xi."""
        r = self.n_rows
        n_g = self.d_mat.shape[1]
        n_s = self.n_slack
        rhs = self.e_mat @ xi + self.h_vec - self.h_mat @ x_fixed
        a = np.zeros((r, n_g + n_s))
        a[:, :n_g] = self.d_mat
        slack_idx = np.where(self.slack_rows)[0]
        for k, i in enumerate(slack_idx):
            a[i, n_g + k] = -1.0
        cost = np.concatenate([np.zeros(n_g), np.full(n_s, self.c_viol)])
        lower = np.concatenate([np.full(n_g, -np.inf), np.zeros(n_s)])
        return LinearProgram.build(cost, a, (LE,) * r, rhs, lower=lower,
                                   name="rt-compact")

    def first_stage_residual(self, x: np.ndarray) -> float:
        if self.b_mat is None:
            raise ValueError("compact form built without a requirement")
        return float(np.max(self.b_mat @ x - self.b_vec))


def build_compact_forms(grid: GridModel, d_hat: np.ndarray,
                        c_viol: float = DEFAULT_C_VIOL,
                        requirement: ReserveRequirement | None = None,
                        vre: np.ndarray | None = None,
                        curtailment_cost: float = 0.0) -> CompactSecondStage:
    """Assemble (H, D, E, h) plus the first-stage (B, b, c)."""
    d_hat = np.asarray(d_hat, dtype=float)
    n_g, n_l, n_n = grid.n_gens, grid.n_lines, grid.n_nodes
    with_curt = vre is not None
    nx = 3 * n_g + (n_n if with_curt else 0)
    m_a = grid.ptdf @ grid.gen_incidence  # (L, G)
    m_d = grid.ptdf @ d_hat               # (L,)
    f_max = grid.f_max

    r = 2 + 2 * n_l + 2 * n_g
    h_mat = np.zeros((r, nx))
    d_mat = np.zeros((r, n_g))
    e_mat = np.zeros((r, n_n))
    h_vec = np.zeros(r)
    slack = np.ones(r, dtype=bool)
    meta: list[tuple[str, str, str]] = []

    # recourse balance equality, split into opposite inequalities (no slack)
    d_mat[0, :] = 1.0
    e_mat[0, :] = 1.0
    d_mat[1, :] = -1.0
    e_mat[1, :] = -1.0
    slack[0] = slack[1] = False
    meta += [("balance", "+", ""), ("balance", "-", "")]

    row = 2
    for l, ln in enumerate(grid.lines):
        h_mat[row, :n_g] = m_a[l]
        d_mat[row] = m_a[l]
        e_mat[row] = grid.ptdf[l]
        h_vec[row] = f_max[l] + m_d[l]
        if with_curt:
            h_mat[row, 3 * n_g:] = -grid.ptdf[l]
        meta.append(("flow", "+", ln.id))
        row += 1
    for l, ln in enumerate(grid.lines):
        h_mat[row, :n_g] = -m_a[l]
        d_mat[row] = -m_a[l]
        e_mat[row] = -grid.ptdf[l]
        h_vec[row] = f_max[l] - m_d[l]
        if with_curt:
            h_mat[row, 3 * n_g:] = grid.ptdf[l]
        meta.append(("flow", "-", ln.id))
        row += 1
    for g, gen in enumerate(grid.generators):
        h_mat[row, n_g + g] = -1.0
        d_mat[row, g] = 1.0
        meta.append(("reserve", "+", gen.id))
        row += 1
    for g, gen in enumerate(grid.generators):
        h_mat[row, 2 * n_g + g] = -1.0
        d_mat[row, g] = -1.0
        meta.append(("reserve", "-", gen.id))
        row += 1

    pi_upper = np.where(slack, c_viol, np.inf)

    cost_x = np.concatenate([grid.cost_energy, grid.cost_res_up,
                             grid.cost_res_down])
    if with_curt:
        cost_x = np.concatenate([cost_x, np.full(n_n, curtailment_cost)])

    b_mat = b_vec = None
    if requirement is not None:
        rows_b = 4 + 2 * n_l + 2 * n_g
        b_mat = np.zeros((rows_b, nx))
        b_vec = np.zeros(rows_b)
        ones_g = np.ones(n_g)
        # energy balance as two opposite inequalities
        b_mat[0, :n_g] = ones_g
        b_vec[0] = d_hat.sum()
        b_mat[1, :n_g] = -ones_g
        b_vec[1] = -d_hat.sum()
        if with_curt:
            b_mat[0, 3 * n_g:] = -1.0
            b_mat[1, 3 * n_g:] = 1.0
        # aggregate reserve requirements
        b_mat[2, n_g:2 * n_g] = -ones_g
        b_vec[2] = -requirement.rho_plus
        b_mat[3, 2 * n_g:3 * n_g] = -ones_g
        b_vec[3] = requirement.rho_minus
        rb = 4
        for l in range(n_l):
            b_mat[rb, :n_g] = m_a[l]
            b_vec[rb] = f_max[l] + m_d[l]
            if with_curt:
                b_mat[rb, 3 * n_g:] = -grid.ptdf[l]
            rb += 1
        for l in range(n_l):
            b_mat[rb, :n_g] = -m_a[l]
            b_vec[rb] = f_max[l] - m_d[l]
            if with_curt:
                b_mat[rb, 3 * n_g:] = grid.ptdf[l]
            rb += 1
        for g in range(n_g):
            b_mat[rb, g] = 1.0
            b_mat[rb, n_g + g] = 1.0
            b_vec[rb] = grid.p_max[g]
            rb += 1
        for g in range(n_g):
            b_mat[rb, g] = -1.0
            b_mat[rb, 2 * n_g + g] = 1.0
            b_vec[rb] = -grid.p_min[g]
            rb += 1

    return CompactSecondStage(
        h_mat=h_mat, d_mat=d_mat, e_mat=e_mat, h_vec=h_vec, slack_rows=slack,
        pi_upper=pi_upper, row_meta=tuple(meta), c_viol=c_viol,
        with_curtailment=with_curt, b_mat=b_mat, b_vec=b_vec, cost_x=cost_x)


# ---------------------------------------------------------------------------
# day-ahead and master problems
# ---------------------------------------------------------------------------

def _x_bounds(grid: GridModel, vre: np.ndarray | None):
    n_g = grid.n_gens
    lower = np.zeros(3 * n_g)
    upper = np.full(3 * n_g, np.inf)
    if vre is not None:
        lower = np.concatenate([lower, np.zeros(grid.n_nodes)])
        upper = np.concatenate([upper, np.asarray(vre, dtype=float)])
    return lower, upper


def _diagnose_infeasible(grid: GridModel, d_hat: np.ndarray,
                         requirement: ReserveRequirement) -> InfeasibleScheduleError:
    total = float(np.asarray(d_hat).sum())
    cap = float(grid.p_max.sum())
    floor = float(grid.p_min.sum())
    if total > cap:
        return InfeasibleScheduleError(
            "energy-capacity", f"net demand {total:.6g} MW exceeds "
            f"installed capacity {cap:.6g} MW")
    if floor > total:
        return InfeasibleScheduleError(
            "energy-floor", f"minimum generation {floor:.6g} MW exceeds "
            f"net demand {total:.6g} MW")
    if requirement.rho_plus > cap - total:
        return InfeasibleScheduleError(
            "up-reserve", f"requirement {requirement.rho_plus:.6g} MW exceeds "
            f"aggregate headroom {cap - total:.6g} MW")
    if -requirement.rho_minus > total - floor:
        return InfeasibleScheduleError(
            "down-reserve", f"requirement {-requirement.rho_minus:.6g} MW "
            f"exceeds aggregate footroom {total - floor:.6g} MW")
    return InfeasibleScheduleError(
        "network", "aggregate limits hold; transmission constraints make "
        "the schedule infeasible")


def _solve_first_stage(grid: GridModel, d_hat, requirement, scenarios,
                       c_viol, options, vre, curtailment_cost) -> DaSchedule:
    """Shared builder for the plain DA problem and the scenario master.

    Variable order: x, then per scenario (p_rec_k, s_k), then eta last.  With
    no scenarios the eta column is omitted and the problem is exactly the
    day-ahead LP.
    """
    options = options or SolverOptions()
    d_hat = np.asarray(d_hat, dtype=float)
    compact = build_compact_forms(grid, d_hat, c_viol, requirement, vre,
                                  curtailment_cost)
    nx = compact.n_x
    n_g = grid.n_gens
    n_s = compact.n_slack
    r2 = compact.n_rows
    k = len(scenarios)
    with_eta = k > 0

    n_vars = nx + k * (n_g + n_s) + (1 if with_eta else 0)
    rows_b = compact.b_mat.shape[0]
    n_rows = rows_b + k * (r2 + 1)

    a = np.zeros((n_rows, n_vars))
    rhs = np.zeros(n_rows)
    cost = np.zeros(n_vars)
    lower = np.full(n_vars, -np.inf)
    upper = np.full(n_vars, np.inf)

    cost[:nx] = compact.cost_x
    lower[:nx], upper[:nx] = _x_bounds(grid, vre)
    a[:rows_b, :nx] = compact.b_mat
    rhs[:rows_b] = compact.b_vec

    slack_idx = np.where(compact.slack_rows)[0]
    for j, xi in enumerate(scenarios):
        xi = np.asarray(xi, dtype=float)
        if xi.size != grid.n_nodes:
            raise ValueError(f"scenario {j} has dimension {xi.size}, "
                             f"expected {grid.n_nodes}")
        col0 = nx + j * (n_g + n_s)
        row0 = rows_b + j * (r2 + 1)
        a[row0:row0 + r2, :nx] = compact.h_mat
        a[row0:row0 + r2, col0:col0 + n_g] = compact.d_mat
        for s_k, i in enumerate(slack_idx):
            a[row0 + i, col0 + n_g + s_k] = -1.0
        rhs[row0:row0 + r2] = compact.e_mat @ xi + compact.h_vec
        # violation-cost link: c_viol' s_k - eta <= 0
        a[row0 + r2, col0 + n_g:col0 + n_g + n_s] = c_viol
        a[row0 + r2, n_vars - 1] = -1.0
        lower[col0 + n_g:col0 + n_g + n_s] = 0.0

    if with_eta:
        cost[n_vars - 1] = 1.0
        lower[n_vars - 1] = 0.0

    lp = LinearProgram.build(cost, a, (LE,) * n_rows, rhs, lower=lower,
                             upper=upper,
                             name="master" if with_eta else "day-ahead")
    sol = solve_lp(lp, options)
    if sol.status is LpStatus.INFEASIBLE:
        raise _diagnose_infeasible(grid, d_hat, requirement)
    if sol.status is not LpStatus.OPTIMAL:
        raise LpError(f"{lp.name} solve ended with status {sol.status.value}")

    x = sol.x[:nx]
    p = x[:n_g]
    curt = x[3 * n_g:] if vre is not None else None
    eta = float(sol.x[n_vars - 1]) if with_eta else 0.0
    d_eff = d_hat + (curt if curt is not None else 0.0)
    flows = scheduled_flows(grid, p, d_eff, feas_tol=1e-6)
    return DaSchedule(p=p, r_plus=x[n_g:2 * n_g], r_minus=x[2 * n_g:3 * n_g],
                      objective=float(compact.cost_x @ x), flows=flows,
                      eta=eta, curtailment=curt)


def solve_da(grid: GridModel, d_hat, requirement: ReserveRequirement,
             options: SolverOptions | None = None, vre=None,
             curtailment_cost: float = 0.0) -> DaSchedule:
    """Least-cost energy and reserve schedule against the point forecast."""
    return _solve_first_stage(grid, d_hat, requirement, [], DEFAULT_C_VIOL,
                              options, vre, curtailment_cost)


def solve_master(grid: GridModel, d_hat, requirement: ReserveRequirement,
                 scenarios, c_viol: float = DEFAULT_C_VIOL,
                 options: SolverOptions | None = None, vre=None,
                 curtailment_cost: float = 0.0) -> DaSchedule:
    """Day-ahead master with one recourse block per deployment scenario.

    ``scenarios`` is an iterable of error vectors; with an empty iterable the
    result coincides with solve_da (the eta term is dropped entirely).
    """
    return _solve_first_stage(grid, d_hat, requirement, list(scenarios),
                              c_viol, options, vre, curtailment_cost)


# ---------------------------------------------------------------------------
# real-time redispatch
# ---------------------------------------------------------------------------

class RtProblem:
    """Reusable real-time problem for one schedule (direct construction).

    Builds the redispatch LP straight from the grid arrays with a hard
    balance equality; re-solving for a new error only swaps the
    xi-dependent right-hand side.
    """

    def __init__(self, grid: GridModel, da: DaSchedule,
                 c_viol: float = DEFAULT_C_VIOL):
        self.grid = grid
        self.da = da
        self.c_viol = c_viol
        n_g, n_l = grid.n_gens, grid.n_lines
        self.n_g, self.n_l = n_g, n_l
        m_a = grid.ptdf @ grid.gen_incidence
        n_vars = n_g + 2 * n_g + 2 * n_l  # p_rec, g+, g-, l+, l-
        rows = 1 + 2 * n_l + 2 * n_g
        a = np.zeros((rows, n_vars))
        relations = [EQ] + [LE] * (rows - 1)
        a[0, :n_g] = 1.0
        r = 1
        # flow rows: M A p_rec - l+/- <= M xi + fmax -/+ f_e
        for l in range(n_l):
            a[r, :n_g] = m_a[l]
            a[r, n_g + 2 * n_g + l] = -1.0
            r += 1
        for l in range(n_l):
            a[r, :n_g] = -m_a[l]
            a[r, n_g + 2 * n_g + n_l + l] = -1.0
            r += 1
        for g in range(n_g):
            a[r, g] = 1.0
            a[r, n_g + g] = -1.0
            r += 1
        for g in range(n_g):
            a[r, g] = -1.0
            a[r, 2 * n_g + g] = -1.0
            r += 1
        cost = np.concatenate([np.zeros(n_g),
                               np.full(2 * n_g + 2 * n_l, c_viol)])
        lower = np.concatenate([np.full(n_g, -np.inf),
                                np.zeros(2 * n_g + 2 * n_l)])
        self._a = a
        self._relations = tuple(relations)
        self._cost = cost
        self._lower = lower
        self._rows = rows
        self._margin_up = grid.f_max - da.flows
        self._margin_dn = grid.f_max + da.flows

    def _rhs(self, xi: np.ndarray) -> np.ndarray:
        n_l, n_g = self.n_l, self.n_g
        m_xi = self.grid.ptdf @ xi
        rhs = np.zeros(self._rows)
        rhs[0] = xi.sum()
        rhs[1:1 + n_l] = m_xi + self._margin_up
        rhs[1 + n_l:1 + 2 * n_l] = -m_xi + self._margin_dn
        rhs[1 + 2 * n_l:1 + 2 * n_l + n_g] = self.da.r_plus
        rhs[1 + 2 * n_l + n_g:] = self.da.r_minus
        return rhs

    def solve(self, xi, options: SolverOptions | None = None) -> RtOutcome:
        xi = np.asarray(xi, dtype=float)
        if xi.size != self.grid.n_nodes:
            raise ValueError(f"error vector has dimension {xi.size}, "
                             f"expected {self.grid.n_nodes}")
        lp = LinearProgram.build(self._cost, self._a, self._relations,
                                 self._rhs(xi), lower=self._lower,
                                 name="real-time")
        sol = solve_lp(lp, options or SolverOptions())
        if sol.status is not LpStatus.OPTIMAL:
            raise LpError(f"real-time solve ended {sol.status.value}; the "
                          "slack formulation should always be feasible")
        n_g, n_l = self.n_g, self.n_l
        p_rec = sol.x[:n_g]
        g_plus = sol.x[n_g:2 * n_g]
        g_minus = sol.x[2 * n_g:3 * n_g]
        l_plus = sol.x[3 * n_g:3 * n_g + n_l]
        l_minus = sol.x[3 * n_g + n_l:]
        flows = self.da.flows + self.grid.ptdf @ (
            self.grid.gen_incidence @ p_rec - xi)
        report = tuple(
            LineLoad(ln.id, float(flows[l]), ln.f_max, float(l_plus[l]),
                     float(l_minus[l]))
            for l, ln in enumerate(self.grid.lines))
        return RtOutcome(p_rec=p_rec, g_plus=g_plus, g_minus=g_minus,
                         l_plus=l_plus, l_minus=l_minus,
                         violation_cost=float(sol.objective), flows=flows,
                         line_report=report)


def solve_rt(grid: GridModel, da: DaSchedule, xi0,
             c_viol: float = DEFAULT_C_VIOL,
             options: SolverOptions | None = None) -> RtOutcome:
    """Redispatch against one realized error vector (always feasible)."""
    return RtProblem(grid, da, c_viol).solve(xi0, options)
