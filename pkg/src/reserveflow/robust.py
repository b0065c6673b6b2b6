"""Deployment-scenario construction.

Two routes produce the error vectors added as contingencies to the master:

* quantile-proportional extreme scenarios (one all-up, one all-down), the
  industry-style recipe; and
* column-and-constraint generation, which alternates between the master and
  an adversary that searches the uncertainty set for the error maximizing
  the real-time violation cost of the current schedule.

The adversary dualizes the inner recourse problem and runs an alternating
ascent over (pi, xi); the pi-step is an LP whose optimum equals the true
violation cost at the current xi by strong duality, so its value doubles as
a verifiable lower bound.  A vertex-enumeration adversary provides exact
solves in low uncertainty dimension and the V-enum baseline.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forecast import (
    ReserveRequirement,
    ScenarioSet,
    UncertaintySet,
    allocation_factors,
)
from .grid import GridModel
from .lp import EQ, LinearProgram, LpError, LpStatus, SolverOptions, solve_lp
from .scheduling import (
    CompactSecondStage,
    DaSchedule,
    RtProblem,
    build_compact_forms,
    solve_master,
)

DUPLICATE_TOL = 1e-6  # infinity-norm below which two scenarios are the same


# ---------------------------------------------------------------------------
# deployment scenario containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DeploymentScenario:
    xi: np.ndarray
    tag: str  # extreme-up | extreme-down | ccg-iteration-<j> | vertex-enum
    raw_xi: np.ndarray | None = None  # pre-projection vector when applicable

    @property
    def aggregate(self) -> float:
        return float(self.xi.sum())


class DeploymentScenarioSet:
    """Ordered deployment scenarios; rejects near-duplicates, checks membership."""

    def __init__(self, entries=(), uset: UncertaintySet | None = None):
        self.uset = uset
        self.entries: list[DeploymentScenario] = []
        for e in entries:
            self.add(e)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def vectors(self) -> list[np.ndarray]:
        return [e.xi for e in self.entries]

    def is_duplicate(self, xi: np.ndarray, tol: float = DUPLICATE_TOL) -> bool:
        return any(np.max(np.abs(e.xi - xi)) <= tol for e in self.entries)

    def add(self, entry: DeploymentScenario) -> bool:
        """Append unless a near-duplicate exists; returns True when added."""
        if self.uset is not None and not self.uset.contains(entry.xi, tol=1e-8):
            raise ValueError(f"deployment scenario {entry.tag!r} lies outside "
                             "the uncertainty set")
        if self.is_duplicate(entry.xi):
            return False
        self.entries.append(entry)
        return True


def extreme_scenarios(scenarios: ScenarioSet, requirement: ReserveRequirement,
                      uset: UncertaintySet,
                      quantile_method: str = "linear") -> DeploymentScenarioSet:
    """Two single-direction deployment scenarios from marginal quantiles.

    Nodal allocation factors are proportional to the per-node quantiles at
    the levels that define the aggregate requirements; each direction's raw
    vector aggregates exactly to the matching requirement and is then
    projected onto the uncertainty set.
    """
    alpha = requirement.alpha
    e_up = allocation_factors(scenarios, (1.0 + alpha) / 2.0, quantile_method)
    e_dn = allocation_factors(scenarios, (1.0 - alpha) / 2.0, quantile_method)
    raw_up = requirement.rho_plus * e_up
    raw_dn = requirement.rho_minus * e_dn
    out = DeploymentScenarioSet(uset=uset)
    out.add(DeploymentScenario(xi=uset.project(raw_up), tag="extreme-up",
                               raw_xi=raw_up))
    out.add(DeploymentScenario(xi=uset.project(raw_dn), tag="extreme-down",
                               raw_xi=raw_dn))
    return out


# ---------------------------------------------------------------------------
# congestion-driven initialization (closed form)
# ---------------------------------------------------------------------------

def flow_stress_vertex(ptdf_row: np.ndarray, f_e: float, lower: np.ndarray,
                       upper: np.ndarray) -> np.ndarray:
    """Box vertex maximizing |f_e - ptdf_row . xi| (closed form, tie-aware).

    The candidate pushing the realized flow further in the direction of the
    scheduled flow picks the upper error where sign(f_e) * ptdf < 0 and the
    lower error where it is >= 0; the opposite assignment covers the other
    direction, and the better of the two is returned (ties prefer the
    same-direction vertex; sign(0) is taken as +1).
    """
    sgn = 1.0 if f_e >= 0 else -1.0
    coef = sgn * np.asarray(ptdf_row, dtype=float)
    same = np.where(coef < 0, upper, lower).astype(float)
    opposite = np.where(coef < 0, lower, upper).astype(float)
    v_same = abs(f_e - np.dot(ptdf_row, same))
    v_opp = abs(f_e - np.dot(ptdf_row, opposite))
    return same if v_same >= v_opp else opposite


def adm_init_for_line(grid: GridModel, da: DaSchedule, line_id: str,
                      uset: UncertaintySet) -> np.ndarray:
    """Projection onto the set of the flow-stressing box vertex for a line."""
    l = grid.line_index[line_id]
    row = grid.ptdf[l]
    if not np.any(row):
        warnings.warn(f"line {line_id!r} has an all-zero flow sensitivity "
                      "row; initialization is degenerate", RuntimeWarning,
                      stacklevel=2)
    vertex = flow_stress_vertex(row, float(da.flows[l]), uset.lower,
                                uset.upper)
    return uset.project(vertex)


# ---------------------------------------------------------------------------
# alternating-direction adversary
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdmIteration:
    lb: float
    ub: float
    xi_at_pi_step: np.ndarray  # the error priced by the pi-step LP
    xi_after: np.ndarray       # incumbent after the xi-step


@dataclass(frozen=True, eq=False)
class AdmResult:
    q_tilde: float
    xi: np.ndarray
    lb: float
    ub: float
    iterations: tuple[AdmIteration, ...]
    converged: bool
    init_label: str = ""

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def _pi_step_lp(compact: CompactSecondStage, coeff: np.ndarray) -> LinearProgram:
    # max coeff'pi  s.t.  D'pi = 0,  0 <= pi <= cap (inf on balance rows)
    n_g = compact.d_mat.shape[1]
    return LinearProgram.build(
        coeff, compact.d_mat.T, (EQ,) * n_g, np.zeros(n_g),
        lower=np.zeros(compact.n_rows), upper=compact.pi_upper,
        sense="max", name="adversary-pi-step")


def adm(compact: CompactSecondStage, x_fixed: np.ndarray,
        uset: UncertaintySet, xi_init: np.ndarray, max_iter: int = 20,
        eps: float = 1e-6, options: SolverOptions | None = None,
        init_label: str = "") -> AdmResult:
    """Alternating ascent on the dualized worst-case recourse problem.

    Fixing xi, the dual LP over pi prices the current error (lower bound,
    equal to the primal violation cost); fixing pi, the error maximizing the
    bilinear objective over the set has the closed knapsack form (upper
    bound).  Stops when the bounds meet within eps or after max_iter
    rounds; the estimate is the midpoint of the final bounds.
    """
    options = options or SolverOptions()
    xi = np.asarray(xi_init, dtype=float).copy()
    if not uset.contains(xi, tol=1e-8):
        raise ValueError("ADM initial point lies outside the uncertainty set")
    hx_minus_h = compact.h_mat @ x_fixed - compact.h_vec
    lb, ub = -np.inf, np.inf
    iters: list[AdmIteration] = []
    while ub - lb >= eps and len(iters) < max_iter:
        coeff = hx_minus_h - compact.e_mat @ xi
        sol = solve_lp(_pi_step_lp(compact, coeff), options)
        if sol.status is not LpStatus.OPTIMAL:
            raise LpError(f"adversary pi-step ended {sol.status.value}; the "
                          "dual polytope is nonempty and bounded above")
        pi = sol.x
        lb = float(sol.objective)
        xi_priced = xi.copy()

        w = -(compact.e_mat.T @ pi)
        const = float(pi @ hx_minus_h)
        cand, best = uset.maximize_linear(w)
        incumbent = float(w @ xi)
        if best > incumbent + 1e-12 * max(1.0, abs(best)):
            xi = cand
            ub = const + best
        else:
            ub = const + incumbent
        iters.append(AdmIteration(lb=lb, ub=ub, xi_at_pi_step=xi_priced,
                                  xi_after=xi.copy()))
    converged = bool(ub - lb < eps)
    return AdmResult(q_tilde=0.5 * (ub + lb), xi=xi, lb=lb, ub=ub,
                     iterations=tuple(iters), converged=converged,
                     init_label=init_label)


@dataclass(frozen=True, eq=False)
class AdversaryResult:
    q_tilde: float
    xi: np.ndarray
    chosen: str
    runs: tuple[AdmResult, ...]


def adversary(compact: CompactSecondStage, x_fixed: np.ndarray,
              uset: UncertaintySet, inits: list[tuple[str, np.ndarray]],
              max_iter: int = 20, eps: float = 1e-6,
              options: SolverOptions | None = None) -> AdversaryResult:
    """Best-of-starts ADM; duplicate starting points are run once."""
    if not inits:
        raise ValueError("adversary needs at least one initialization")
    seen: list[np.ndarray] = []
    runs: list[AdmResult] = []
    for label, xi0 in inits:
        xi0 = np.asarray(xi0, dtype=float)
        if any(np.max(np.abs(xi0 - s)) <= 1e-9 for s in seen):
            continue
        seen.append(xi0)
        runs.append(adm(compact, x_fixed, uset, xi0, max_iter, eps, options,
                        init_label=label))
    best = max(range(len(runs)), key=lambda i: runs[i].q_tilde)
    chosen = runs[best]
    return AdversaryResult(q_tilde=chosen.q_tilde, xi=chosen.xi,
                           chosen=chosen.init_label, runs=tuple(runs))


# ---------------------------------------------------------------------------
# vertex enumeration
# ---------------------------------------------------------------------------

def enumerate_vertices(uset: UncertaintySet, dims=None,
                       cap: int = 12) -> list[np.ndarray]:
    """All vertices of the set restricted to the uncertain coordinates.

    Coordinates outside ``dims`` are fixed at zero (they must admit zero).
    Vertices are box corners inside the slab plus, per slab face, points
    with one coordinate freed to meet the aggregate bound exactly.
    """
    n = uset.n_nodes
    if dims is None:
        dims = [j for j in range(n) if uset.upper[j] - uset.lower[j] > 1e-12]
    dims = list(dims)
    if len(dims) > cap:
        raise ValueError(f"{len(dims)} uncertain dimensions exceed the "
                         f"enumeration cap of {cap}")
    for j in range(n):
        if j not in dims and not (uset.lower[j] - 1e-9 <= 0.0 <= uset.upper[j] + 1e-9):
            raise ValueError(f"coordinate {j} cannot be fixed at zero")
    lo = uset.lower[dims]
    hi = uset.upper[dims]
    d = len(dims)
    tol = 1e-9

    points: list[np.ndarray] = []

    def emit(vals):
        xi = np.zeros(n)
        xi[dims] = vals
        for p in points:
            if np.max(np.abs(p - xi)) <= 1e-9:
                return
        points.append(xi)

    for bits in itertools.product((0, 1), repeat=d):
        vals = np.where(np.array(bits, dtype=bool), hi, lo)
        agg = float(vals.sum())
        if uset.rho_minus - tol <= agg <= uset.rho_plus + tol:
            emit(vals)
    for free in range(d):
        others = [k for k in range(d) if k != free]
        for bits in itertools.product((0, 1), repeat=d - 1):
            vals = np.empty(d)
            for k, bit in zip(others, bits):
                vals[k] = hi[k] if bit else lo[k]
            partial = float(vals[others].sum())
            for target in (uset.rho_minus, uset.rho_plus):
                v = target - partial
                if lo[free] - tol <= v <= hi[free] + tol:
                    vals[free] = min(max(v, lo[free]), hi[free])
                    emit(vals.copy())
    return points


def vertex_deployment_set(uset: UncertaintySet, dims=None,
                          cap: int = 12) -> DeploymentScenarioSet:
    out = DeploymentScenarioSet(uset=uset)
    for xi in enumerate_vertices(uset, dims, cap):
        out.add(DeploymentScenario(xi=xi, tag="vertex-enum"))
    return out


def exact_adversary(grid: GridModel, schedule: DaSchedule,
                    uset: UncertaintySet, c_viol: float,
                    options: SolverOptions | None = None, dims=None,
                    cap: int = 12) -> tuple[float, np.ndarray]:
    """Exact worst-case violation cost by scanning every vertex of the set."""
    prob = RtProblem(grid, schedule, c_viol)
    best_val, best_xi = -np.inf, None
    for xi in enumerate_vertices(uset, dims, cap):
        val = prob.solve(xi, options).violation_cost
        if val > best_val + 1e-12:
            best_val, best_xi = val, xi
    return float(best_val), best_xi


# ---------------------------------------------------------------------------
# congested-line flagging
# ---------------------------------------------------------------------------

def flag_congested_lines(grid: GridModel, da: DaSchedule,
                         scenarios: ScenarioSet, c_viol: float = 1000.0,
                         options: SolverOptions | None = None,
                         threshold: float = 0.99,
                         top_k: int = 15) -> tuple[str, ...]:
    """Lines loaded beyond threshold*f_max in the DA flows or in any
    real-time solve of the schedule against the scenario ensemble, ranked by
    occurrence count (ties by line position), truncated to top_k."""
    limits = threshold * grid.f_max
    counts = np.zeros(grid.n_lines, dtype=int)
    counts += (np.abs(da.flows) >= limits).astype(int)
    prob = RtProblem(grid, da, c_viol)
    for xi in scenarios.errors:
        out = prob.solve(xi, options)
        counts += (np.abs(out.flows) >= limits).astype(int)
    order = sorted(range(grid.n_lines), key=lambda l: (-counts[l], l))
    return tuple(grid.lines[l].id for l in order[:top_k] if counts[l] > 0)


# ---------------------------------------------------------------------------
# column-and-constraint generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CcgConfig:
    m_max: int = 10
    c_viol: float = 1000.0
    gap_tol: float = 1e-6
    adm_max_iter: int = 20
    eps_adm: float = 1e-6
    flagged_top_k: int = 15
    congestion_threshold: float = 0.99
    adversary_mode: str = "adm"        # "adm" | "venum"
    init_set: str = "extremes+lines"   # "extremes+lines" | "extremes"
    venum_cap: int = 12
    curtailment_cost: float = 0.0
    quantile_method: str = "linear"


@dataclass(frozen=True, eq=False)
class CcgIteration:
    lb: float
    ub: float
    eta: float
    da_cost: float
    scenario_added: bool
    adm_iterations: int
    init_chosen: str


@dataclass(frozen=True, eq=False)
class CcgReport:
    iterations: tuple[CcgIteration, ...]
    termination: str  # gap-closed | max-scenarios | duplicate-scenario | adversary-zero
    final_gap: float
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "termination": self.termination,
            "final_gap": self.final_gap,
            "note": self.note,
            "iterations": [
                {"lb": it.lb, "ub": it.ub, "eta": it.eta,
                 "da_cost": it.da_cost, "scenario_added": it.scenario_added,
                 "adm_iterations": it.adm_iterations,
                 "init_chosen": it.init_chosen}
                for it in self.iterations],
        }


@dataclass(frozen=True, eq=False)
class CcgResult:
    schedule: DaSchedule
    deployment: DeploymentScenarioSet
    report: CcgReport


def ccg(grid: GridModel, d_hat, requirement: ReserveRequirement,
        uset: UncertaintySet, scenarios: ScenarioSet,
        config: CcgConfig = CcgConfig(),
        options: SolverOptions | None = None, vre=None,
        flagged_lines: tuple[str, ...] | None = None) -> CcgResult:
    """Iteratively grow the deployment-scenario set from adversary solutions.

    Each round solves the master over the current scenarios (eta* is the
    lower bound on the worst violation cost) and asks the adversary for the
    error maximizing the violation cost of that schedule (upper bound).  A
    strictly harmful error joins the set; the loop stops when the bounds
    meet, the adversary comes back empty or duplicated, or the scenario
    budget is exhausted.
    """
    options = options or SolverOptions()
    d_hat = np.asarray(d_hat, dtype=float)
    extremes = extreme_scenarios(scenarios, requirement, uset,
                                 config.quantile_method)
    if flagged_lines is None and config.init_set == "extremes+lines":
        base = solve_master(grid, d_hat, requirement, [], config.c_viol,
                            options, vre, config.curtailment_cost)
        flagged_lines = flag_congested_lines(
            grid, base, scenarios, config.c_viol, options,
            config.congestion_threshold, config.flagged_top_k)
    flagged_lines = tuple(flagged_lines or ())
    compact = build_compact_forms(grid, d_hat, config.c_viol, requirement,
                                  vre, config.curtailment_cost)

    deployment = DeploymentScenarioSet(uset=uset)
    iterations: list[CcgIteration] = []
    termination = "max-scenarios"
    ub = np.inf
    master = None
    zero_tol = config.gap_tol

    while True:
        master = solve_master(grid, d_hat, requirement, deployment.vectors(),
                              config.c_viol, options, vre,
                              config.curtailment_cost)
        lb = master.eta

        if config.adversary_mode == "venum":
            q, xi_wc = exact_adversary(grid, master, uset, config.c_viol,
                                       options, cap=config.venum_cap)
            adm_used, init_label = 0, "vertex-enum"
        else:
            x = master.x_vector(with_curtailment=vre is not None)
            inits: list[tuple[str, np.ndarray]] = [
                (e.tag, e.xi) for e in extremes]
            if config.init_set == "extremes+lines":
                inits += [(f"line-{lid}", adm_init_for_line(grid, master,
                                                            lid, uset))
                          for lid in flagged_lines]
            result = adversary(compact, x, uset, inits, config.adm_max_iter,
                               config.eps_adm, options)
            q, xi_wc = result.q_tilde, result.xi
            chosen_run = next(r for r in result.runs
                              if r.init_label == result.chosen)
            adm_used, init_label = chosen_run.n_iterations, result.chosen
        ub = q
        gap = ub - lb

        added = False
        if q <= zero_tol:
            termination = "gap-closed" if lb <= zero_tol else "adversary-zero"
        elif gap <= config.gap_tol * max(1.0, abs(ub)):
            termination = "gap-closed"
        elif deployment.is_duplicate(xi_wc):
            termination = "duplicate-scenario"
        elif len(deployment) >= config.m_max:
            termination = "max-scenarios"
        else:
            added = True

        iterations.append(CcgIteration(
            lb=float(lb), ub=float(ub), eta=float(master.eta),
            da_cost=float(master.objective), scenario_added=added,
            adm_iterations=adm_used, init_chosen=init_label))
        if not added:
            break
        tag = f"ccg-iteration-{len(iterations) - 1}"
        deployment.add(DeploymentScenario(xi=uset.project(xi_wc), tag=tag))

    note = ""
    if termination == "gap-closed" and master.eta > zero_tol:
        note = ("eta remains positive at convergence: no schedule provides "
                "slack-free recourse on all of the uncertainty set; consider "
                "raising the violation penalty or reviewing the set bounds")
    elif termination == "adversary-zero":
        note = ("adversary reported zero violation while the master bound "
                "is positive; the heuristic search likely missed the "
                "worst-case error")
    report = CcgReport(iterations=tuple(iterations), termination=termination,
                       final_gap=float(ub - master.eta), note=note)
    return CcgResult(schedule=master, deployment=deployment, report=report)
