"""Transmit intensity allocation under per-LED caps and a sum budget.

Maximizing sum_i ln(A_i) subject to 0 < A_i <= A_max_i and sum(A) <= A_total
has the capped water-filling solution A_i = min(A_max_i, w) with a common
water level w chosen to exhaust the budget, unless the caps already fit the
budget or the uncapped uniform split is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BISECT_MAX_ITER = 200
BUDGET_TOL = 1e-10


@dataclass
class PowerBudget:
    """Per-LED caps a_max (positive vector) and total budget a_total > 0."""

    a_max: np.ndarray
    a_total: float

    def __post_init__(self):
        self.a_max = np.asarray(self.a_max, dtype=float)
        if self.a_max.ndim != 1 or self.a_max.size == 0:
            raise ValueError("a_max must be a nonempty vector")
        if np.any(self.a_max <= 0) or not np.all(np.isfinite(self.a_max)):
            raise ValueError("a_max entries must be positive and finite")
        self.a_total = float(self.a_total)
        if self.a_total <= 0:
            raise ValueError("a_total must be positive")

    @property
    def n_tx(self) -> int:
        return self.a_max.size


def optimize_power(budget: PowerBudget) -> np.ndarray:
    """Log-sum maximizing allocation.

    Caps alone feasible -> caps.  Uniform split below every cap -> uniform.
    Otherwise bisect the water level until the budget is met within
    BUDGET_TOL, then redistribute the residual exactly over the uncapped
    LEDs so the budget binds to machine precision.
    """
    a_max, a_total = budget.a_max, budget.a_total
    n = budget.n_tx
    if a_max.sum() <= a_total:
        return a_max.copy()
    if a_max.min() >= a_total / n:
        return np.full(n, a_total / n)

    lo = a_max.min() * 1e-6
    hi = a_max.max()
    level = hi
    for _ in range(BISECT_MAX_ITER):
        level = 0.5 * (lo + hi)
        residual = np.minimum(a_max, level).sum() - a_total
        if abs(residual) < BUDGET_TOL:
            break
        if residual > 0:
            hi = level
        else:
            lo = level
    # the bisection pins the active set; one division nails the level, the
    # second pass re-checks the set in case a cap sat within BUDGET_TOL of it
    for _ in range(2):
        uncapped = a_max > level
        if not uncapped.any():
            break
        level = (a_total - a_max[~uncapped].sum()) / uncapped.sum()
    return np.minimum(a_max, level)


def uniform_power(budget: PowerBudget) -> np.ndarray:
    """Equal allocation min(min_j a_max_j, a_total / n) on every LED."""
    value = min(budget.a_max.min(), budget.a_total / budget.n_tx)
    return np.full(budget.n_tx, value)
