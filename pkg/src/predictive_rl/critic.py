"""Quadratic Q-function critic trained by temporal differences over a replay buffer.

Feature layout: for ``chi = [x, y, theta, v, omega]`` the feature vector holds
``chi[i] * chi[j]`` for ``i <= j`` in row-major upper-triangle order, i.e.
``x*x, x*y, x*theta, x*v, x*omega, y*y, y*theta, ...`` (15 entries).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .dynamics import InvalidInputError

CHI_DIM = 5
N_FEATURES = CHI_DIM * (CHI_DIM + 1) // 2
_ROWS, _COLS = np.triu_indices(CHI_DIM)


class EmptyBufferError(ValueError):
    """Raised when a critic operation needs at least one transition."""


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    cost: float
    next_state: np.ndarray
    next_action: np.ndarray


def _chi(state, action) -> np.ndarray:
    return np.concatenate([np.asarray(state, dtype=float), np.asarray(action, dtype=float)], axis=-1)


def features(state, action) -> np.ndarray:
    """Upper triangle of ``chi (x) chi``; works on single pairs or stacked batches."""
    chi = _chi(state, action)
    if chi.shape[-1] != CHI_DIM:
        raise InvalidInputError(f"expected 3 state + 2 action components, got {chi.shape[-1]}")
    return chi[..., _ROWS] * chi[..., _COLS]


def weights_to_matrix(w) -> np.ndarray:
    """Symmetric matrix ``P`` with ``chi^T P chi == w . features``."""
    w = np.asarray(w, dtype=float)
    P = np.zeros((CHI_DIM, CHI_DIM))
    P[_ROWS, _COLS] = w
    off = _ROWS != _COLS
    P[_COLS[off], _ROWS[off]] = w[off]
    P[_ROWS[off], _COLS[off]] *= 0.5
    P[_COLS[off], _ROWS[off]] *= 0.5
    return P


def matrix_to_weights(P) -> np.ndarray:
    """Inverse of :func:`weights_to_matrix` for a symmetric ``P``."""
    P = np.asarray(P, dtype=float)
    return np.where(_ROWS == _COLS, 1.0, 2.0) * P[_ROWS, _COLS]


def _check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (N_FEATURES,):
        raise InvalidInputError(f"critic weights must have shape ({N_FEATURES},), got {w.shape}")
    return w


def q_value(w, state, action) -> float:
    """``Q(s, a; w) = w . features(s, a)``."""
    return float(_check_weights(w) @ features(state, action))


def td_error(w, w_prev, t: Transition, gamma: float = 1.0) -> float:
    """``Q(s, a; w) - gamma * Q(s', a'; w_prev) - cost`` for one stored transition."""
    return q_value(w, t.state, t.action) - gamma * q_value(w_prev, t.next_state, t.next_action) - t.cost


class ReplayBuffer:
    """Bounded FIFO of transitions; the oldest entry is evicted once full."""

    def __init__(self, capacity: int = 20):
        if capacity < 1:
            raise ValueError("buffer capacity must be at least 1")
        self.capacity = int(capacity)
        self._items: deque[Transition] = deque(maxlen=self.capacity)

    def push(self, t: Transition) -> None:
        self._items.append(t)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self._items)

    def __getitem__(self, i: int) -> Transition:
        return self._items[i]

    def clear(self) -> None:
        self._items.clear()

    def arrays(self):
        """Stacked ``(features(s, a), features(s', a'), cost)`` for the whole buffer."""
        if not self._items:
            raise EmptyBufferError("replay buffer is empty")
        s = np.array([t.state for t in self._items], dtype=float)
        a = np.array([t.action for t in self._items], dtype=float)
        s2 = np.array([t.next_state for t in self._items], dtype=float)
        a2 = np.array([t.next_action for t in self._items], dtype=float)
        c = np.array([t.cost for t in self._items], dtype=float)
        return features(s, a), features(s2, a2), c


def push(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def critic_loss(w, w_prev, buf: ReplayBuffer, gamma: float = 1.0) -> float:
    """Half the squared TD errors summed over the buffer."""
    w = _check_weights(w)
    w_prev = _check_weights(w_prev)
    phi, phi_next, c = buf.arrays()
    e = phi @ w - gamma * (phi_next @ w_prev) - c
    return 0.5 * float(e @ e)


@dataclass(frozen=True)
class CriticUpdate:
    weights: np.ndarray
    loss: float
    rank: int
    rank_deficient: bool


def update_critic(buf: ReplayBuffer, w_prev, gamma: float = 1.0, rcond: float = 1e-12) -> CriticUpdate:
    """Exact minimizer of :func:`critic_loss` over ``w`` with ``w_prev`` frozen.

    The TD error is affine in ``w``, so the minimizer is a linear
    least-squares solution. Rank-deficient buffers (fewer than 15 informative
    transitions) get the minimum-norm solution via SVD.
    """
    w_prev = _check_weights(w_prev)
    phi, phi_next, c = buf.arrays()
    target = gamma * (phi_next @ w_prev) + c
    w, _, rank, _ = np.linalg.lstsq(phi, target, rcond=rcond)
    e = phi @ w - target
    return CriticUpdate(w, 0.5 * float(e @ e), int(rank), int(rank) < N_FEATURES)


def fit_residual(buf: ReplayBuffer, gamma: float = 1.0, rcond: float = 1e-12) -> CriticUpdate:
    """Weights minimizing the TD loss with the same weights on both sides.

    Bellman-residual variant of :func:`update_critic`: the target is not
    frozen, so each call is a fresh fit and errors do not compound across
    calls.
    """
    phi, phi_next, c = buf.arrays()
    A = phi - gamma * phi_next
    w, _, rank, _ = np.linalg.lstsq(A, c, rcond=rcond)
    e = A @ w - c
    return CriticUpdate(w, 0.5 * float(e @ e), int(rank), int(rank) < N_FEATURES)


def project_psd(w, floor: float = 0.0) -> np.ndarray:
    """Clip the eigenvalues of the critic matrix at ``floor``."""
    P = weights_to_matrix(w)
    ev, vecs = np.linalg.eigh(0.5 * (P + P.T))
    return matrix_to_weights((vecs * np.maximum(ev, floor)) @ vecs.T)


def project_above_cost(w, R) -> np.ndarray:
    """Nearest weights (Frobenius norm on the matrix form) with ``Q(s, a) >= rho(s, a)``.

    The excess ``P - diag(R)`` is clipped to the positive semidefinite cone,
    which keeps the learned Q-function convex in the action and never below
    the running cost it accumulates.
    """
    Rm = np.diag(np.asarray(R, dtype=float))
    excess = weights_to_matrix(w) - Rm
    excess = 0.5 * (excess + excess.T)
    ev, vecs = np.linalg.eigh(excess)
    return matrix_to_weights((vecs * np.maximum(ev, 0.0)) @ vecs.T + Rm)
