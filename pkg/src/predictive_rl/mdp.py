"""Small deterministic finite MDPs for checking stacked Q-functions.

Costs are minimized. A stacked Q-function sums ordinary Q-values along a
predicted trajectory; on a finite MDP both sides can be computed exactly,
so this module doubles as a test oracle for the stacked actor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FiniteMDP:
    """Deterministic MDP with ``next_state[s, a]`` and ``cost[s, a]``."""

    next_state: np.ndarray
    cost: np.ndarray
    gamma: float

    def __post_init__(self):
        nxt = np.asarray(self.next_state, dtype=int)
        c = np.asarray(self.cost, dtype=float)
        if nxt.shape != c.shape or nxt.ndim != 2:
            raise ValueError("next_state and cost must share shape (n_states, n_actions)")
        if nxt.min() < 0 or nxt.max() >= nxt.shape[0]:
            raise ValueError("next_state entries must index states")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        object.__setattr__(self, "next_state", nxt)
        object.__setattr__(self, "cost", c)

    @property
    def n_states(self) -> int:
        return self.cost.shape[0]

    @property
    def n_actions(self) -> int:
        return self.cost.shape[1]


def random_mdp(rng: np.random.Generator, n_states: int = 5, n_actions: int = 3, gamma: float = 0.9) -> FiniteMDP:
    nxt = rng.integers(0, n_states, size=(n_states, n_actions))
    cost = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return FiniteMDP(nxt, cost, gamma)


def value_iteration(mdp: FiniteMDP, tol: float = 1e-14, max_iter: int = 100_000):
    """Optimal ``(V, Q)`` by repeated Bellman backups."""
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Q = mdp.cost + mdp.gamma * V[mdp.next_state]
        V_new = Q.min(axis=1)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    return V, mdp.cost + mdp.gamma * V[mdp.next_state]


def policy_iteration(mdp: FiniteMDP, max_iter: int = 1000):
    """Optimal deterministic policy and its value via exact policy evaluation."""
    n = mdp.n_states
    idx = np.arange(n)
    policy = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        T = np.zeros((n, n))
        T[idx, mdp.next_state[idx, policy]] = 1.0
        V = np.linalg.solve(np.eye(n) - mdp.gamma * T, mdp.cost[idx, policy])
        Q = mdp.cost + mdp.gamma * V[mdp.next_state]
        best = Q.argmin(axis=1)
        # switch only on strict improvement so ties cannot cycle
        improve = Q[idx, best] < Q[idx, policy] - 1e-13
        if not improve.any():
            return policy, V
        policy = np.where(improve, best, policy)
    raise RuntimeError("policy iteration did not converge")


def greedy_trajectory(mdp: FiniteMDP, Q: np.ndarray, x0: int, horizon: int):
    """States and greedy actions ``(x_i, u_i)`` for ``i = 1..horizon``."""
    states, actions = [], []
    x = int(x0)
    for _ in range(horizon):
        u = int(np.argmin(Q[x]))
        states.append(x)
        actions.append(u)
        x = int(mdp.next_state[x, u])
    return states, actions


def tail_cost(mdp: FiniteMDP, policy: np.ndarray, x: int, u: int, tol: float = 1e-16) -> float:
    """Cost of taking ``u`` at ``x`` and following ``policy`` afterwards.

    Summed by direct simulation until the discount weight drops below ``tol``.
    """
    total = float(mdp.cost[x, u])
    x = int(mdp.next_state[x, u])
    w = mdp.gamma
    while w > tol:
        a = int(policy[x])
        total += w * float(mdp.cost[x, a])
        x = int(mdp.next_state[x, a])
        w *= mdp.gamma
    return total


def stacked_q(mdp: FiniteMDP, policy: np.ndarray, states, actions) -> float:
    """Stacked cost: every stage pays its action, then follows ``policy``."""
    return float(sum(tail_cost(mdp, policy, x, u) for x, u in zip(states, actions)))
