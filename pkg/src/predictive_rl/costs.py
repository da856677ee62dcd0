"""Quadratic running cost, discounting and the accumulated-cost metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import InvalidConfigError, InvalidInputError

DEFAULT_R = (100.0, 100.0, 1.0, 0.01, 0.01)


@dataclass(frozen=True)
class StageRecord:
    """One logged control step: goal-frame state, applied action, running cost."""

    time: float
    state: tuple
    action: tuple
    cost: float


def cost_matrix(diag: Sequence[float] = DEFAULT_R) -> np.ndarray:
    """Validate the diagonal of R for ``(x, y, theta, v, omega)``."""
    r = np.asarray(diag, dtype=float)
    if r.shape != (5,):
        raise InvalidConfigError(f"cost matrix needs 5 diagonal entries, got {r.shape}")
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise InvalidConfigError("cost matrix entries must be finite and positive")
    return r


def running_cost(state, action, R) -> float:
    """``chi^T R chi`` with ``chi = [x, y, theta, v, omega]`` and diagonal ``R``."""
    chi = np.concatenate([np.asarray(state, dtype=float), np.asarray(action, dtype=float)])
    if not np.all(np.isfinite(chi)):
        raise InvalidInputError("non-finite state or action")
    r = np.asarray(R, dtype=float)
    if r.ndim == 2:
        r = np.diag(r)
    return float(np.dot(r, chi * chi))


def discounted_sum(costs: Iterable[float], gamma: float) -> float:
    """``sum_i gamma**(i-1) c_i``; an empty list sums to zero."""
    if not 0.0 < gamma <= 1.0:
        raise InvalidConfigError(f"discount must lie in (0, 1], got {gamma}")
    total = 0.0
    weight = 1.0
    for c in costs:
        total += weight * c
        weight *= gamma
    return total


def accumulated_cost(log: Sequence[StageRecord], delta: float) -> float:
    """Rectangle-rule time integral of the running cost (undiscounted)."""
    return delta * sum(rec.cost for rec in log)
