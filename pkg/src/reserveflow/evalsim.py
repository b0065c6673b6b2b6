"""Out-of-sample evaluation of scheduling methods.

For each method (DSW, EXT, CCG, optionally VENUM) the day-ahead schedule is
fixed, the real-time problem is solved against every realized error of a
test ensemble, and violation statistics are reported separately for
realizations inside and outside the uncertainty set.  Per-realization solves
are independent and can be spread over worker processes; the reduction into
a report is a deterministic fold over realization indices.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .forecast import (
    ReserveRequirement,
    ScenarioSet,
    UncertaintySet,
    build_uncertainty_set,
    reserve_requirements,
)
from .grid import GridModel
from .lp import SolverOptions
from .robust import (
    CcgConfig,
    CcgReport,
    DeploymentScenarioSet,
    ccg,
    extreme_scenarios,
    flag_congested_lines,
    vertex_deployment_set,
)
from .scheduling import DaSchedule, RtProblem, solve_da, solve_master

KNOWN_METHODS = ("DSW", "EXT", "CCG", "VENUM")


@dataclass(frozen=True, eq=False)
class GaussianSampler:
    """Zero-mean multivariate normal forecast errors on a subset of nodes.

    The covariance is given in squared per-unit on ``base_mva``; sampled
    errors are scaled to MW.  Nodes not listed carry zero error.
    """

    node_ids: tuple[str, ...]
    cov: np.ndarray  # (len(node_ids), len(node_ids)), pu^2
    base_mva: float = 100.0
    seed: int = 0

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "cov", cov)
        k = len(self.node_ids)
        if cov.shape != (k, k):
            raise ValueError("covariance shape does not match node count")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-10:
            raise ValueError("covariance must be positive semi-definite")

    def sample(self, k: int, all_node_ids, point_forecast, vre=None,
               seed: int | None = None) -> ScenarioSet:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        draws = rng.multivariate_normal(np.zeros(len(self.node_ids)),
                                        self.cov, size=k) * self.base_mva
        all_node_ids = tuple(all_node_ids)
        errors = np.zeros((k, len(all_node_ids)))
        index = {nid: j for j, nid in enumerate(all_node_ids)}
        for c, nid in enumerate(self.node_ids):
            if nid not in index:
                raise ValueError(f"sampler node {nid!r} not in the grid")
            errors[:, index[nid]] = draws[:, c]
        return ScenarioSet(errors=errors,
                           point_forecast=np.asarray(point_forecast, float),
                           node_ids=all_node_ids,
                           vre_forecast=None if vre is None
                           else np.asarray(vre, float))


def sample_scenarios(sampler: GaussianSampler, k: int, all_node_ids,
                     point_forecast, vre=None,
                     seed: int | None = None) -> ScenarioSet:
    return sampler.sample(k, all_node_ids, point_forecast, vre, seed)


# ---------------------------------------------------------------------------
# configuration and report containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    c_viol: float = 1000.0
    slack_tol: float = 1e-6       # MW; a realization counts as violated
    membership_tol: float = 1e-8  # tolerance of the in-set predicate
    quantile_method: str = "linear"
    ccg: CcgConfig = field(default_factory=CcgConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1
    use_curtailment: bool = True  # only takes effect when VRE data present


@dataclass(frozen=True, eq=False)
class DetailRecord:
    method: str
    index: int
    in_set: bool
    violation_cost: float
    violated: bool


@dataclass(frozen=True, eq=False)
class MethodResult:
    name: str
    da_cost: float
    eta: float
    reserve_up: float
    reserve_down: float
    n_deployment: int
    n_inside: int
    n_outside: int
    violations_inside: int
    violations_outside: int
    avg_rt_cost_inside: float
    avg_rt_cost_outside: float
    schedule: DaSchedule | None = None
    deployment: DeploymentScenarioSet | None = None
    ccg_report: CcgReport | None = None
    error: str | None = None

    @property
    def violation_pct_inside(self) -> float:
        return 100.0 * self.violations_inside / self.n_inside \
            if self.n_inside else 0.0

    @property
    def violation_pct_outside(self) -> float:
        return 100.0 * self.violations_outside / self.n_outside \
            if self.n_outside else 0.0

    def to_dict(self) -> dict:
        out = {
            "da_cost": self.da_cost,
            "eta": self.eta,
            "reserve_up_mw": self.reserve_up,
            "reserve_down_mw": self.reserve_down,
            "n_deployment_scenarios": self.n_deployment,
            "n_inside": self.n_inside,
            "n_outside": self.n_outside,
            "violations_inside": self.violations_inside,
            "violations_outside": self.violations_outside,
            "violation_pct_inside": self.violation_pct_inside,
            "violation_pct_outside": self.violation_pct_outside,
            "avg_rt_cost_inside": self.avg_rt_cost_inside,
            "avg_rt_cost_outside": self.avg_rt_cost_outside,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.ccg_report is not None:
            out["ccg"] = self.ccg_report.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    label: str
    alpha: float
    requirement: ReserveRequirement
    uset: UncertaintySet
    methods: dict[str, MethodResult]
    details: tuple[DetailRecord, ...]
    n_test: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "requirement": {"rho_plus_mw": self.requirement.rho_plus,
                            "rho_minus_mw": self.requirement.rho_minus},
            "uncertainty_set": {
                "box_lower_mw": list(self.uset.lower),
                "box_upper_mw": list(self.uset.upper),
                "rho_minus_mw": self.uset.rho_minus,
                "rho_plus_mw": self.uset.rho_plus,
            },
            "n_test": self.n_test,
            "methods": {name: res.to_dict()
                        for name, res in self.methods.items()},
        }


# ---------------------------------------------------------------------------
# real-time batches
# ---------------------------------------------------------------------------

def _rt_chunk(args):
    grid, schedule, xis, c_viol, options = args
    prob = RtProblem(grid, schedule, c_viol)
    out = []
    for xi in xis:
        res = prob.solve(xi, options)
        out.append((res.violation_cost, res.max_slack()))
    return out


def solve_rt_batch(grid: GridModel, schedule: DaSchedule, xis: np.ndarray,
                   c_viol: float, options: SolverOptions,
                   workers: int = 1) -> list[tuple[float, float]]:
    """(violation cost, max slack) per realized error, in input order."""
    xis = np.asarray(xis, dtype=float)
    if workers <= 1 or xis.shape[0] < 4 * max(workers, 1):
        return _rt_chunk((grid, schedule, xis, c_viol, options))
    chunks = np.array_split(np.arange(xis.shape[0]), workers)
    jobs = [(grid, schedule, xis[idx], c_viol, options)
            for idx in chunks if idx.size]
    results: list[tuple[float, float]] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_rt_chunk, jobs):
            results.extend(part)
    return results


# ---------------------------------------------------------------------------
# schedules per method
# ---------------------------------------------------------------------------

def _method_schedule(name, grid, d_hat, requirement, uset, train, config,
                     vre, flagged):
    """Returns (schedule, deployment set or None, ccg report or None)."""
    ccg_cfg = replace(config.ccg, c_viol=config.c_viol,
                      quantile_method=config.quantile_method)
    if name == "DSW":
        return solve_da(grid, d_hat, requirement, config.solver, vre,
                        ccg_cfg.curtailment_cost), None, None
    if name == "EXT":
        ext = extreme_scenarios(train, requirement, uset,
                                config.quantile_method)
        sched = solve_master(grid, d_hat, requirement, ext.vectors(),
                             config.c_viol, config.solver, vre,
                             ccg_cfg.curtailment_cost)
        return sched, ext, None
    if name == "CCG":
        result = ccg(grid, d_hat, requirement, uset, train, ccg_cfg,
                     config.solver, vre, flagged_lines=flagged)
        return result.schedule, result.deployment, result.report
    if name == "VENUM":
        vertices = vertex_deployment_set(uset, cap=ccg_cfg.venum_cap)
        sched = solve_master(grid, d_hat, requirement, vertices.vectors(),
                             config.c_viol, config.solver, vre,
                             ccg_cfg.curtailment_cost)
        return sched, vertices, None
    raise ValueError(f"unknown method {name!r}; expected one of "
                     f"{KNOWN_METHODS}")


def evaluate(grid: GridModel, d_hat, methods, train: ScenarioSet,
             test: ScenarioSet, alpha: float,
             config: EvalConfig = EvalConfig(),
             label: str = "hour-0") -> EvaluationReport:
    """Schedule with each method, stress against the test ensemble.

    DSW is always solved (its schedule drives the congested-line flagging
    for CCG); methods that fail are reported with their error while the
    rest proceed.
    """
    methods = list(methods)
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of "
                             f"{KNOWN_METHODS}")
    if tuple(train.node_ids) != tuple(grid.node_ids) \
            or tuple(test.node_ids) != tuple(grid.node_ids):
        raise ValueError("scenario sets are not aligned with the grid nodes")
    d_hat = np.asarray(d_hat, dtype=float)
    vre = train.vre_forecast if config.use_curtailment else None

    requirement = reserve_requirements(train, alpha, config.quantile_method)
    uset = build_uncertainty_set(train, requirement)
    inside = np.array([uset.contains(xi, config.membership_tol)
                       for xi in test.errors])

    dsw_schedule = solve_da(grid, d_hat, requirement, config.solver, vre,
                            config.ccg.curtailment_cost)
    flagged = None
    if "CCG" in methods and config.ccg.init_set == "extremes+lines":
        flagged = flag_congested_lines(
            grid, dsw_schedule, train, config.c_viol, config.solver,
            config.ccg.congestion_threshold, config.ccg.flagged_top_k)

    results: dict[str, MethodResult] = {}
    details: list[DetailRecord] = []
    for name in methods:
        try:
            if name == "DSW":
                schedule, deployment, report = dsw_schedule, None, None
            else:
                schedule, deployment, report = _method_schedule(
                    name, grid, d_hat, requirement, uset, train, config,
                    vre, flagged)
        except Exception as exc:  # noqa: BLE001 - per-method isolation
            results[name] = MethodResult(
                name=name, da_cost=float("nan"), eta=float("nan"),
                reserve_up=float("nan"), reserve_down=float("nan"),
                n_deployment=0, n_inside=int(inside.sum()),
                n_outside=int((~inside).sum()), violations_inside=0,
                violations_outside=0, avg_rt_cost_inside=float("nan"),
                avg_rt_cost_outside=float("nan"), error=str(exc))
            continue
        outcomes = solve_rt_batch(grid, schedule, test.errors, config.c_viol,
                                  config.solver, config.workers)
        costs = np.array([c for c, _ in outcomes])
        violated = np.array([s > config.slack_tol for _, s in outcomes])
        for i, (c, v) in enumerate(zip(costs, violated)):
            details.append(DetailRecord(method=name, index=i,
                                        in_set=bool(inside[i]),
                                        violation_cost=float(c),
                                        violated=bool(v)))
        n_in = int(inside.sum())
        n_out = int((~inside).sum())
        results[name] = MethodResult(
            name=name,
            da_cost=float(schedule.objective),
            eta=float(schedule.eta),
            reserve_up=float(schedule.r_plus.sum()),
            reserve_down=float(schedule.r_minus.sum()),
            n_deployment=0 if deployment is None else len(deployment),
            n_inside=n_in,
            n_outside=n_out,
            violations_inside=int(violated[inside].sum()),
            violations_outside=int(violated[~inside].sum()),
            avg_rt_cost_inside=float(costs[inside].mean()) if n_in else 0.0,
            avg_rt_cost_outside=float(costs[~inside].mean()) if n_out else 0.0,
            schedule=schedule, deployment=deployment, ccg_report=report)
    return EvaluationReport(label=label, alpha=alpha, requirement=requirement,
                            uset=uset, methods=results,
                            details=tuple(details),
                            n_test=test.n_scenarios)


# ---------------------------------------------------------------------------
# multi-hour runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HourInputs:
    label: str
    d_hat: np.ndarray
    train: ScenarioSet
    test: ScenarioSet


@dataclass(frozen=True, eq=False)
class MultiHourResult:
    reports: tuple[EvaluationReport, ...]
    aggregate: dict

    def to_dict(self) -> dict:
        return {"aggregate": self.aggregate,
                "hours": [r.to_dict() for r in self.reports]}


def multi_hour_run(grid: GridModel, hours, methods, alpha: float,
                   config: EvalConfig = EvalConfig()) -> MultiHourResult:
    """Evaluate every hour and fold realization-count-weighted aggregates.

    In-set metrics are weighted by each hour's in-set realization count,
    out-of-set metrics by the complement; the CCG scenario-count histogram
    counts hours by the number of deployment scenarios recovered.
    """
    reports = [evaluate(grid, h.d_hat, methods, h.train, h.test, alpha=alpha,
                        config=config, label=h.label)
               for h in hours]
    aggregate: dict = {"methods": {}, "n_hours": len(reports)}
    for name in methods:
        rows = [r.methods[name] for r in reports if name in r.methods
                and r.methods[name].error is None]
        if not rows:
            continue
        w_in = np.array([m.n_inside for m in rows], dtype=float)
        w_out = np.array([m.n_outside for m in rows], dtype=float)
        entry = {
            "hours": len(rows),
            "avg_da_cost": _wmean([m.da_cost for m in rows], w_in),
            "avg_rt_cost_inside": _wmean(
                [m.avg_rt_cost_inside for m in rows], w_in),
            "violation_pct_inside": _wmean(
                [m.violation_pct_inside for m in rows], w_in),
            "avg_rt_cost_outside": _wmean(
                [m.avg_rt_cost_outside for m in rows], w_out),
            "violation_pct_outside": _wmean(
                [m.violation_pct_outside for m in rows], w_out),
            "n_inside_total": int(w_in.sum()),
            "n_outside_total": int(w_out.sum()),
        }
        if name == "CCG":
            hist: dict[str, int] = {}
            for m in rows:
                hist[str(m.n_deployment)] = hist.get(str(m.n_deployment),
                                                     0) + 1
            entry["scenario_count_histogram"] = dict(
                sorted(hist.items(), key=lambda kv: int(kv[0])))
        aggregate["methods"][name] = entry
    return MultiHourResult(reports=tuple(reports), aggregate=aggregate)


def _wmean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        return 0.0
    return float(values @ weights / total)
