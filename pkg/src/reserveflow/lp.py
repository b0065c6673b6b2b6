"""Dense linear-programming layer.

A ``LinearProgram`` is a standard-form description (min/max of c'x subject to
row-wise <=/=/>= constraints and variable bounds).  Two interchangeable
backends solve it:

* ``bundled`` -- a self-contained bounded-variable revised simplex with
  Bland's anti-cycling rule.  Fully deterministic: re-solving the identical
  problem reproduces the identical pivot sequence, basis and objective.
* ``scipy``  -- scipy.optimize.linprog (HiGHS), useful for large instances.

Both report duals with the convention ``y_i = d(objective)/d(rhs_i)``:
nonpositive on binding <= rows, nonnegative on binding >= rows, free on
equalities (for minimization; signs flip for maximization).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

LE = "<="
EQ = "="
GE = ">="
_RELATIONS = (LE, EQ, GE)

# nonbasic/basic variable states used by the bundled simplex
_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2
_FREE = 3


class LpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


class LpError(RuntimeError):
    """Hard numerical failure (e.g. singular basis beyond recovery)."""


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iter: int | None = None
    backend: str = "bundled"  # "bundled" | "scipy"
    refactor_every: int = 100

    def iter_cap(self, m: int, n: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return 200 * (m + n) + 2000


@dataclass(frozen=True)
class LinearProgram:
    """min (or max) cost'x  s.t.  A x (<=|=|>=) rhs,  lower <= x <= upper."""

    cost: np.ndarray
    a_matrix: np.ndarray
    relations: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"
    name: str = "lp"
    row_names: tuple[str, ...] | None = None
    col_names: tuple[str, ...] | None = None

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.a_matrix.shape[1]

    @staticmethod
    def build(cost, a_matrix, relations, rhs, lower=None, upper=None,
              sense="min", name="lp", row_names=None, col_names=None) -> "LinearProgram":
        cost = np.asarray(cost, dtype=float).reshape(-1)
        a_matrix = np.asarray(a_matrix, dtype=float)
        if a_matrix.ndim == 1:
            a_matrix = a_matrix.reshape(1, -1)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        n = cost.size
        if isinstance(relations, str):
            relations = (relations,) * rhs.size
        relations = tuple(relations)
        if lower is None:
            lower = np.full(n, -np.inf)
        if upper is None:
            upper = np.full(n, np.inf)
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        lp = LinearProgram(cost=cost, a_matrix=a_matrix, relations=relations,
                           rhs=rhs, lower=lower, upper=upper, sense=sense,
                           name=name,
                           row_names=tuple(row_names) if row_names else None,
                           col_names=tuple(col_names) if col_names else None)
        lp.validate()
        return lp

    def validate(self) -> None:
        m, n = self.a_matrix.shape
        if self.cost.size != n:
            raise ValueError(f"cost length {self.cost.size} != {n} columns")
        if self.rhs.size != m or len(self.relations) != m:
            raise ValueError(f"rhs/relations length mismatch with {m} rows")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds length mismatch")
        for rel in self.relations:
            if rel not in _RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        for label, arr in (("cost", self.cost), ("a_matrix", self.a_matrix),
                           ("rhs", self.rhs)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {label}")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("NaN in bounds")
        if np.any(self.lower > self.upper):
            j = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"lower > upper for variable {self._col_name(j)}")

    def _col_name(self, j: int) -> str:
        return self.col_names[j] if self.col_names else f"x{j}"

    def _row_name(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float | None
    duals: np.ndarray | None
    iterations: int
    basis: np.ndarray | None = None
    max_violation: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def feasibility_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint/bound violation of x (0 means feasible)."""
    ax = lp.a_matrix @ x
    worst = 0.0
    for i, rel in enumerate(lp.relations):
        if rel == LE:
            worst = max(worst, ax[i] - lp.rhs[i])
        elif rel == GE:
            worst = max(worst, lp.rhs[i] - ax[i])
        else:
            worst = max(worst, abs(ax[i] - lp.rhs[i]))
    lo = lp.lower - x
    hi = x - lp.upper
    lo = lo[np.isfinite(lo)]
    hi = hi[np.isfinite(hi)]
    if lo.size:
        worst = max(worst, float(lo.max()))
    if hi.size:
        worst = max(worst, float(hi.max()))
    return float(worst)


def dual_objective(lp: LinearProgram, duals: np.ndarray) -> float:
    """Lagrangian dual value of a row-multiplier vector (bound terms included).

    For an optimal dual vector this equals the optimal objective.
    """
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.cost
    y = sign * np.asarray(duals, dtype=float)
    z = c - lp.a_matrix.T @ y
    val = float(y @ lp.rhs)
    for j in range(lp.n_cols):
        if z[j] > 0:
            val += z[j] * lp.lower[j] if np.isfinite(lp.lower[j]) else -np.inf
        elif z[j] < 0:
            val += z[j] * lp.upper[j] if np.isfinite(lp.upper[j]) else -np.inf
    return sign * val


def complementary_slackness_residual(lp: LinearProgram, x: np.ndarray,
                                     duals: np.ndarray) -> float:
    """max_i |y_i * (a_i'x - b_i)| over inequality rows."""
    ax = lp.a_matrix @ x
    worst = 0.0
    for i, rel in enumerate(lp.relations):
        if rel != EQ:
            worst = max(worst, abs(duals[i] * (ax[i] - lp.rhs[i])))
    return float(worst)


def solve_lp(lp: LinearProgram, options: SolverOptions | None = None) -> LpSolution:
    """Solve an LP; infeasible/unbounded are statuses, not exceptions."""
    options = options or SolverOptions()
    lp.validate()
    if options.backend == "bundled":
        return _BoundedSimplex(lp, options).solve()
    if options.backend == "scipy":
        return _solve_scipy(lp, options)
    raise ValueError(f"unknown backend {options.backend!r}")


def solve_lp_dual_values(lp: LinearProgram,
                         options: SolverOptions | None = None) -> LpSolution:
    """As solve_lp, but an optimal solution must carry row duals."""
    sol = solve_lp(lp, options)
    if sol.is_optimal and sol.duals is None:
        raise LpError(f"backend returned no duals for {lp.name}")
    return sol


# ---------------------------------------------------------------------------
# bundled bounded-variable revised simplex
# ---------------------------------------------------------------------------

class _BoundedSimplex:
    """Two-phase revised simplex over A x + s = b with variable bounds.

    Slack bounds encode the row relation (<=: s in [0,inf), >=: s in
    (-inf,0], =: s fixed at 0).  Phase 1 minimizes artificial-variable mass.
    Entering and leaving variables follow Bland's least-index rule, which
    makes the pivot sequence deterministic and cycle-free.
    """

    def __init__(self, lp: LinearProgram, options: SolverOptions):
        self.lp = lp
        self.opt = options
        self.m, self.n = lp.a_matrix.shape
        sign = 1.0 if lp.sense == "min" else -1.0
        m, n = self.m, self.n

        slack_lo = np.zeros(m)
        slack_hi = np.zeros(m)
        for i, rel in enumerate(lp.relations):
            if rel == LE:
                slack_lo[i], slack_hi[i] = 0.0, np.inf
            elif rel == GE:
                slack_lo[i], slack_hi[i] = -np.inf, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0

        self.a_full = np.hstack([lp.a_matrix, np.eye(m)])
        self.lo = np.concatenate([lp.lower, slack_lo])
        self.hi = np.concatenate([lp.upper, slack_hi])
        self.c = np.concatenate([sign * lp.cost, np.zeros(m)])
        self.b = lp.rhs.astype(float).copy()
        self.n_total = n + m
        self.n_art = 0
        self.iterations = 0
        self.scale_b = max(1.0, float(np.max(np.abs(self.b))) if m else 1.0)

    # -- setup ------------------------------------------------------------

    def _initial_point(self):
        m, n = self.m, self.n
        status = np.empty(self.n_total, dtype=np.int8)
        x = np.zeros(self.n_total)
        for j in range(n):
            if np.isfinite(self.lo[j]):
                status[j], x[j] = _AT_LOWER, self.lo[j]
            elif np.isfinite(self.hi[j]):
                status[j], x[j] = _AT_UPPER, self.hi[j]
            else:
                status[j], x[j] = _FREE, 0.0
        resid = self.b - self.a_full[:, :n] @ x[:n]

        art_cols = []
        art_sign = []
        basis = np.empty(m, dtype=np.int64)
        for i in range(m):
            s = n + i
            val = min(max(resid[i], self.lo[s]), self.hi[s])
            if val == resid[i]:
                basis[i] = s
                status[s], x[s] = _BASIC, val
            else:
                status[s], x[s] = (_AT_LOWER, self.lo[s]) if val == self.lo[s] \
                    else (_AT_UPPER, self.hi[s])
                art_cols.append(i)
                art_sign.append(1.0 if resid[i] - val > 0 else -1.0)
        self.n_art = len(art_cols)
        if self.n_art:
            extra = np.zeros((m, self.n_art))
            for k, (i, sg) in enumerate(zip(art_cols, art_sign)):
                extra[i, k] = sg
            self.a_full = np.hstack([self.a_full, extra])
            self.lo = np.concatenate([self.lo, np.zeros(self.n_art)])
            self.hi = np.concatenate([self.hi, np.full(self.n_art, np.inf)])
            self.c = np.concatenate([self.c, np.zeros(self.n_art)])
            status = np.concatenate(
                [status, np.full(self.n_art, _BASIC, dtype=np.int8)])
            x = np.concatenate([x, np.zeros(self.n_art)])
            for k, i in enumerate(art_cols):
                basis[i] = self.n_total + k  # value filled in by _refactor
        self.n_grand = self.n_total + self.n_art
        self.status = status
        self.x = x
        self.basis = basis

    def _refactor(self):
        b_mat = self.a_full[:, self.basis]
        try:
            self.b_inv = np.linalg.inv(b_mat)
        except np.linalg.LinAlgError as exc:
            bad = ", ".join(self.lp._col_name(j) if j < self.n else f"slack:{self.lp._row_name(j - self.n)}"
                            for j in self.basis[: min(len(self.basis), 12)] if j < self.n_total)
            raise LpError(
                f"singular basis while solving {self.lp.name!r} "
                f"(basis columns include: {bad})") from exc
        mask = np.ones(self.n_grand, dtype=bool)
        mask[self.basis] = False
        rhs = self.b - self.a_full[:, mask] @ self.x[mask]
        self.x[self.basis] = self.b_inv @ rhs

    # -- core loop ---------------------------------------------------------

    def _run_phase(self, costs: np.ndarray, iter_cap: int) -> str:
        m = self.m
        tol_d = self.opt.opt_tol * max(1.0, float(np.max(np.abs(costs))))
        eps_piv = 1e-11
        since_refactor = 0
        while True:
            if self.iterations >= iter_cap:
                return "iter_limit"
            self.iterations += 1
            since_refactor += 1
            if since_refactor >= self.opt.refactor_every:
                self._refactor()
                since_refactor = 0

            y = costs[self.basis] @ self.b_inv
            z = costs - y @ self.a_full
            enter = -1
            direction = 0.0
            for j in range(self.n_grand):
                st = self.status[j]
                if st == _BASIC:
                    continue
                if self.hi[j] - self.lo[j] <= 0:
                    continue  # fixed variable can never move
                if (st == _AT_LOWER or st == _FREE) and z[j] < -tol_d:
                    enter, direction = j, 1.0
                    break
                if (st == _AT_UPPER or st == _FREE) and z[j] > tol_d:
                    enter, direction = j, -1.0
                    break
            if enter < 0:
                return "optimal"

            w = self.b_inv @ self.a_full[:, enter]
            deltas = -direction * w
            # max step before a basic variable hits one of its bounds
            t_basic = np.inf
            leave_pos = -1
            ratios = np.full(m, np.inf)
            for i in range(m):
                d = deltas[i]
                if d > eps_piv:
                    room = self.hi[self.basis[i]] - self.x[self.basis[i]]
                elif d < -eps_piv:
                    room = self.lo[self.basis[i]] - self.x[self.basis[i]]
                else:
                    continue
                t_i = room / d
                if not np.isfinite(t_i):
                    continue
                t_i = max(t_i, 0.0)
                ratios[i] = t_i
                if t_i < t_basic - 1e-12 or (
                        t_i <= t_basic + 1e-12
                        and (leave_pos < 0 or self.basis[i] < self.basis[leave_pos])):
                    t_basic = min(t_i, t_basic)
                    leave_pos = i
            t_own = self.hi[enter] - self.lo[enter]  # inf unless both bounds finite

            if t_own < t_basic:
                # bound flip, basis unchanged
                self.x[self.basis] += deltas * t_own
                if direction > 0:
                    self.x[enter] = self.hi[enter]
                    self.status[enter] = _AT_UPPER
                else:
                    self.x[enter] = self.lo[enter]
                    self.status[enter] = _AT_LOWER
                continue
            if leave_pos < 0:
                return "unbounded"

            if abs(w[leave_pos]) < 1e-9:
                # tiny pivot: rebuild B^-1 and redo the iteration if the
                # factors were stale, else take the most stable row among
                # the (near-)tied min ratios
                if since_refactor > 0:
                    self._refactor()
                    since_refactor = 0
                    self.iterations -= 1
                    continue
                window = t_basic + 1e-9 * (1.0 + abs(t_basic))
                tied = [i for i in range(m) if ratios[i] <= window]
                leave_pos = max(tied, key=lambda i: abs(w[i]))
                t_basic = ratios[leave_pos]
                if abs(w[leave_pos]) < 1e-11:
                    raise LpError(
                        f"vanishing pivot while solving {self.lp.name!r} on "
                        f"row {self.lp._row_name(min(leave_pos, self.m - 1))}"
                        "; numerical breakdown")

            t = t_basic
            self.x[self.basis] += deltas * t
            self.x[enter] = self.x[enter] + direction * t
            leaving = self.basis[leave_pos]
            self.status[leaving] = _AT_UPPER if deltas[leave_pos] > 0 else _AT_LOWER
            self.x[leaving] = self.hi[leaving] if deltas[leave_pos] > 0 else self.lo[leaving]
            self.basis[leave_pos] = enter
            self.status[enter] = _BASIC

            piv = w[leave_pos]
            # product-form update of B^-1
            row = self.b_inv[leave_pos, :] / piv
            self.b_inv -= np.outer(w, row)
            self.b_inv[leave_pos, :] = row

    def _drive_out_artificials(self):
        eps = 1e-9
        for pos in range(self.m):
            j = self.basis[pos]
            if j < self.n_total:
                continue
            row = self.b_inv[pos, :] @ self.a_full[:, :self.n_total]
            enter = -1
            for k in range(self.n_total):
                if self.status[k] != _BASIC and abs(row[k]) > eps \
                        and self.hi[k] - self.lo[k] > 0:
                    enter = k
                    break
            if enter < 0:
                continue  # redundant row; artificial stays basic at 0
            w = self.b_inv @ self.a_full[:, enter]
            old_val = self.x[enter]
            self.status[self.basis[pos]] = _AT_LOWER
            self.x[self.basis[pos]] = 0.0
            self.basis[pos] = enter
            self.status[enter] = _BASIC
            piv = w[pos]
            rown = self.b_inv[pos, :] / piv
            self.b_inv -= np.outer(w, rown)
            self.b_inv[pos, :] = rown
            self.x[enter] = old_val  # degenerate pivot: values unchanged

    # -- public ------------------------------------------------------------

    def solve(self) -> LpSolution:
        lp = self.lp
        self._initial_point()
        self._refactor()
        iter_cap = self.opt.iter_cap(self.m, self.n)

        if self.n_art:
            phase1 = np.zeros(self.n_grand)
            phase1[self.n_total:] = 1.0
            outcome = self._run_phase(phase1, iter_cap)
            if outcome == "iter_limit":
                return LpSolution(LpStatus.ITER_LIMIT, None, None, None,
                                  self.iterations)
            if outcome == "unbounded":
                raise LpError(f"phase-1 unbounded in {lp.name!r}: "
                              "numerical breakdown")
            art_mass = float(np.sum(self.x[self.n_total:]))
            if art_mass > self.opt.feas_tol * self.scale_b:
                return LpSolution(LpStatus.INFEASIBLE, None, None, None,
                                  self.iterations)
            self._drive_out_artificials()
            self.hi[self.n_total:] = 0.0  # freeze artificials for phase 2

        outcome = self._run_phase(self.c, iter_cap)
        if outcome == "iter_limit":
            return LpSolution(LpStatus.ITER_LIMIT, None, None, None,
                              self.iterations)
        if outcome == "unbounded":
            return LpSolution(LpStatus.UNBOUNDED, None, None, None,
                              self.iterations)

        self._refactor()  # tighten basic values before reporting
        sign = 1.0 if lp.sense == "min" else -1.0
        x = self.x[:self.n].copy()
        y = self.c[self.basis] @ self.b_inv
        duals = sign * y
        obj = float(lp.cost @ x)
        resid = feasibility_residual(lp, x)
        if resid > 100 * self.opt.feas_tol * self.scale_b:
            raise LpError(
                f"simplex returned an infeasible point for {lp.name!r} "
                f"(residual {resid:.3e}); numerical breakdown")
        return LpSolution(LpStatus.OPTIMAL, x, obj, duals, self.iterations,
                          basis=self.basis.copy(), max_violation=resid)


# ---------------------------------------------------------------------------
# scipy (HiGHS) backend
# ---------------------------------------------------------------------------

def _solve_scipy(lp: LinearProgram, options: SolverOptions) -> LpSolution:
    from scipy.optimize import linprog

    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.cost
    le_rows = [i for i, r in enumerate(lp.relations) if r == LE]
    ge_rows = [i for i, r in enumerate(lp.relations) if r == GE]
    eq_rows = [i for i, r in enumerate(lp.relations) if r == EQ]

    a_ub = b_ub = a_eq = b_eq = None
    if le_rows or ge_rows:
        a_ub = np.vstack([lp.a_matrix[le_rows], -lp.a_matrix[ge_rows]])
        b_ub = np.concatenate([lp.rhs[le_rows], -lp.rhs[ge_rows]])
    if eq_rows:
        a_eq = lp.a_matrix[eq_rows]
        b_eq = lp.rhs[eq_rows]
    bounds = [(None if not np.isfinite(lo) else lo,
               None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lower, lp.upper)]

    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs",
                  options={"presolve": True,
                           "primal_feasibility_tolerance": 1e-9,
                           "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE, None, None, None, int(res.nit))
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED, None, None, None, int(res.nit))
    if res.status == 1:
        return LpSolution(LpStatus.ITER_LIMIT, None, None, None, int(res.nit))
    if res.status != 0:
        raise LpError(f"scipy backend failed on {lp.name!r}: {res.message}")

    duals = np.zeros(lp.n_rows)
    n_le = len(le_rows)
    if le_rows or ge_rows:
        marg = np.asarray(res.ineqlin.marginals, dtype=float)
        for k, i in enumerate(le_rows):
            duals[i] = marg[k]
        for k, i in enumerate(ge_rows):
            duals[i] = -marg[n_le + k]
    if eq_rows:
        marg = np.asarray(res.eqlin.marginals, dtype=float)
        for k, i in enumerate(eq_rows):
            duals[i] = marg[k]
    x = np.asarray(res.x, dtype=float)
    obj = float(lp.cost @ x)
    return LpSolution(LpStatus.OPTIMAL, x, obj, sign * duals, int(res.nit),
                      max_violation=feasibility_residual(lp, x))


# ---------------------------------------------------------------------------
# plain-text dump for external cross-checking
# ---------------------------------------------------------------------------

def dump_lp(lp: LinearProgram, path) -> None:
    """Write an MPS-like plain-text dump (see docs/formats.md)."""
    lines = [f"NAME {lp.name}", f"OBJSENSE {lp.sense.upper()}", "ROWS"]
    for i, rel in enumerate(lp.relations):
        tag = {LE: "L", EQ: "E", GE: "G"}[rel]
        lines.append(f" {tag} {lp._row_name(i)}")
    lines.append("COLUMNS")
    for j in range(lp.n_cols):
        name = lp._col_name(j)
        if lp.cost[j] != 0.0:
            lines.append(f" {name} OBJ {lp.cost[j]!r}")
        col = lp.a_matrix[:, j]
        for i in np.nonzero(col)[0]:
            lines.append(f" {name} {lp._row_name(int(i))} {col[i]!r}")
    lines.append("RHS")
    for i in range(lp.n_rows):
        if lp.rhs[i] != 0.0:
            lines.append(f" RHS {lp._row_name(i)} {lp.rhs[i]!r}")
    lines.append("BOUNDS")
    for j in range(lp.n_cols):
        name = lp._col_name(j)
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            lines.append(f" LO BND {name} {lo!r}")
        else:
            lines.append(f" MI BND {name}")
        if np.isfinite(hi):
            lines.append(f" UP BND {name} {hi!r}")
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
