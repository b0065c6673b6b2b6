"""Scenario handling and the forecast-error uncertainty set.

The uncertainty set is the intersection of a nodal box (element-wise min/max
over the scenario ensemble) with an aggregate slab whose bounds are the
system-wide reserve requirements.  Membership tests, exact Euclidean
projection and closed-form linear maximization over the set live here; all
operations are pure functions over immutable inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class UncertaintySetError(ValueError):
    """Empty or inconsistent uncertainty set."""


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """K forecast-error vectors (MW) plus the nodal point forecast (MW)."""

    errors: np.ndarray          # (K, n_nodes)
    point_forecast: np.ndarray  # (n_nodes,)
    node_ids: tuple[str, ...]
    vre_forecast: np.ndarray | None = None  # optional per-node VRE (MW)

    def __post_init__(self):
        errors = np.asarray(self.errors, dtype=float)
        object.__setattr__(self, "errors", errors)
        object.__setattr__(self, "point_forecast",
                           np.asarray(self.point_forecast, dtype=float))
        if self.vre_forecast is not None:
            object.__setattr__(self, "vre_forecast",
                               np.asarray(self.vre_forecast, dtype=float))
        if errors.ndim != 2:
            raise ValueError("errors must be a K x n_nodes matrix")
        k, n = errors.shape
        if k < 2:
            raise ValueError("need at least 2 scenarios")
        if len(self.node_ids) != n or self.point_forecast.size != n:
            raise ValueError("node dimension mismatch")
        if not np.all(np.isfinite(errors)):
            raise ValueError("non-finite forecast errors")
        if not np.all(np.isfinite(self.point_forecast)):
            raise ValueError("non-finite point forecast")

    @property
    def n_scenarios(self) -> int:
        return self.errors.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.errors.shape[1]

    def aggregates(self) -> np.ndarray:
        """System-level error per scenario (row sums)."""
        return self.errors.sum(axis=1)


@dataclass(frozen=True)
class ReserveRequirement:
    rho_plus: float   # MW, upper aggregate bound (typically >= 0)
    rho_minus: float  # MW, lower aggregate bound (typically <= 0)
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.rho_minus > self.rho_plus:
            raise ValueError("rho_minus exceeds rho_plus")


def empirical_quantile(samples, u: float, method: str = "linear") -> float:
    """Empirical quantile of a sample.

    ``linear`` interpolates between order statistics (the common type-7
    convention and the package default).  ``nearest-rank`` returns the
    ceil(u*K)-th order statistic, for which at least ceil(u*K) samples are
    <= the result exactly; the linear estimator can undershoot that count by
    one for very small samples.
    """
    xs = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if xs.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < u < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    k = xs.size
    if method == "linear":
        h = (k - 1) * u
        lo = int(math.floor(h))
        hi = min(lo + 1, k - 1)
        return float(xs[lo] + (h - lo) * (xs[hi] - xs[lo]))
    if method == "nearest-rank":
        idx = max(int(math.ceil(u * k)), 1) - 1
        return float(xs[idx])
    raise ValueError(f"unknown quantile method {method!r}")


def reserve_requirements(scenarios: ScenarioSet, alpha: float,
                         method: str = "linear") -> ReserveRequirement:
    """System-wide up/down reserve requirements from aggregate error quantiles."""
    agg = scenarios.aggregates()
    rho_plus = empirical_quantile(agg, (1.0 + alpha) / 2.0, method)
    rho_minus = empirical_quantile(agg, (1.0 - alpha) / 2.0, method)
    return ReserveRequirement(rho_plus=rho_plus, rho_minus=rho_minus,
                              alpha=alpha)


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Box of nodal errors intersected with an aggregate slab (all MW)."""

    lower: np.ndarray
    upper: np.ndarray
    rho_minus: float
    rho_plus: float
    node_ids: tuple[str, ...]

    # slab residuals below this size are treated as on-boundary, which makes
    # the projection exactly idempotent in floating point
    _slab_tol: float = 1e-9

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bad box shape")
        if np.any(lower > upper):
            raise UncertaintySetError("box lower exceeds box upper")
        if max(self.rho_minus, lower.sum()) > min(self.rho_plus, upper.sum()) + 1e-9:
            raise UncertaintySetError(
                "empty intersection of box and aggregate slab: "
                f"[{max(self.rho_minus, lower.sum()):.6g}, "
                f"{min(self.rho_plus, upper.sum()):.6g}] is void")

    @property
    def n_nodes(self) -> int:
        return self.lower.size

    def contains(self, xi, tol: float = 1e-8) -> bool:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != self.lower.shape:
            raise ValueError("dimension mismatch")
        if np.any(xi < self.lower - tol) or np.any(xi > self.upper + tol):
            return False
        agg = float(xi.sum())
        return self.rho_minus - tol <= agg <= self.rho_plus + tol

    # -- Euclidean projection ------------------------------------------------

    def project(self, xi) -> np.ndarray:
        """Exact Euclidean projection onto the set.

        Clip to the box first; if the aggregate then violates the slab, the
        projection lies on the violated slab face and equals a clipped shift
        clip(xi - lam, lower, upper) whose multiplier is located exactly by a
        breakpoint scan of the piecewise-linear aggregate function.
        """
        xi = np.asarray(xi, dtype=float)
        if xi.shape != self.lower.shape:
            raise ValueError("dimension mismatch")
        clipped = np.clip(xi, self.lower, self.upper)
        agg = float(clipped.sum())
        if agg > self.rho_plus + self._slab_tol:
            return self._project_to_face(xi, self.rho_plus)
        if agg < self.rho_minus - self._slab_tol:
            return self._project_to_face(xi, self.rho_minus)
        return clipped

    def _project_to_face(self, xi: np.ndarray, target: float) -> np.ndarray:
        # g(lam) = sum(clip(xi - lam, lo, hi)) is piecewise linear and
        # nonincreasing; find lam with g(lam) = target via its breakpoints
        breaks = np.unique(np.concatenate([xi - self.upper, xi - self.lower]))
        values = np.array([np.clip(xi - b, self.lower, self.upper).sum()
                           for b in breaks])
        # values are nonincreasing in breaks
        if target >= values[0]:
            lam = breaks[0]
        elif target <= values[-1]:
            lam = breaks[-1]
        else:
            hi_idx = int(np.searchsorted(-values, -target, side="left"))
            lo_idx = hi_idx - 1
            b0, b1 = breaks[lo_idx], breaks[hi_idx]
            v0, v1 = values[lo_idx], values[hi_idx]
            lam = b0 if v1 == v0 else b0 + (v0 - target) * (b1 - b0) / (v0 - v1)
        out = np.clip(xi - lam, self.lower, self.upper)
        # one exact polish step on the interior (unclipped) coordinates
        free = (out > self.lower) & (out < self.upper)
        n_free = int(free.sum())
        if n_free:
            out[free] += (target - out.sum()) / n_free
            np.clip(out, self.lower, self.upper, out=out)
        return out

    # -- linear maximization ---------------------------------------------------

    def maximize_linear(self, w) -> tuple[np.ndarray, float]:
        """argmax/max of w'xi over the set, by continuous knapsack.

        Start from the box-optimal corner and, if the aggregate slab is
        violated, walk coordinates back toward the interior in order of
        increasing |w| (ties by node index) until the slab is met.  Returns a
        vertex whenever no w entry is zero.
        """
        w = np.asarray(w, dtype=float)
        if w.shape != self.lower.shape:
            raise ValueError("dimension mismatch")
        xi = np.where(w > 0, self.upper, self.lower).astype(float)
        agg = float(xi.sum())
        if agg > self.rho_plus:
            self._trim(xi, w, agg - self.rho_plus, lowering=True)
        elif agg < self.rho_minus:
            self._trim(xi, w, self.rho_minus - agg, lowering=False)
        return xi, float(w @ xi)

    def _trim(self, xi: np.ndarray, w: np.ndarray, excess: float,
              lowering: bool) -> None:
        # lowering: pull coordinates at their upper value down (cheapest
        # objective loss per MW first); raising: symmetric
        candidates = np.where(xi == self.upper)[0] if lowering \
            else np.where(xi == self.lower)[0]
        order = sorted(candidates, key=lambda j: (abs(w[j]), j))
        for j in order:
            room = (self.upper[j] - self.lower[j])
            if room <= 0:
                continue
            step = min(room, excess)
            xi[j] += -step if lowering else step
            excess -= step
            if excess <= 0:
                return
        if excess > 1e-9:
            raise UncertaintySetError("slab unreachable from the box; the "
                                      "set is empty")


def build_uncertainty_set(scenarios: ScenarioSet,
                          requirement: ReserveRequirement) -> UncertaintySet:
    """Box from scenario-wise min/max intersected with the requirement slab."""
    return UncertaintySet(lower=scenarios.errors.min(axis=0),
                          upper=scenarios.errors.max(axis=0),
                          rho_minus=requirement.rho_minus,
                          rho_plus=requirement.rho_plus,
                          node_ids=scenarios.node_ids)


def contains(uset: UncertaintySet, xi, tol: float = 1e-8) -> bool:
    return uset.contains(xi, tol)


def project_onto_set(uset: UncertaintySet, xi) -> np.ndarray:
    return uset.project(xi)


def maximize_linear_over_set(uset: UncertaintySet, w) -> tuple[np.ndarray, float]:
    return uset.maximize_linear(w)


def nodal_quantiles(scenarios: ScenarioSet, u: float,
                    method: str = "linear") -> np.ndarray:
    """Per-node empirical quantile of the forecast errors."""
    return np.array([empirical_quantile(scenarios.errors[:, j], u, method)
                     for j in range(scenarios.n_nodes)])


def allocation_factors(scenarios: ScenarioSet, u: float,
                       method: str = "linear") -> np.ndarray:
    """Nodal allocation factors proportional to the marginal u-quantiles.

    Falls back to a uniform split (with a warning) when the quantiles sum to
    zero, which would otherwise leave the allocation undefined.
    """
    q = nodal_quantiles(scenarios, u, method)
    denom = float(q.sum())
    if abs(denom) < 1e-12:
        warnings.warn("nodal quantiles sum to zero; using uniform allocation",
                      RuntimeWarning, stacklevel=2)
        return np.full(scenarios.n_nodes, 1.0 / scenarios.n_nodes)
    return q / denom
