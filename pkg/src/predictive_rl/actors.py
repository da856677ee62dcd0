"""Receding-horizon actors: MPC, rollout Q-learning (RQL) and stacked Q-learning (SQL).

Every actor optimizes a flat action sequence ``[v_1, omega_1, ..., v_N, omega_N]``
against Euler predictions of the unicycle model, applies the first action and
shifts the solution as the warm start for the next step. RQL and SQL refresh
their critic from the replay buffer before the actor runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from . import critic as _critic
from .costs import DEFAULT_R, cost_matrix, running_cost
from .dynamics import OMEGA_MAX, V_MAX, InvalidConfigError, InvalidInputError, clamp_action

log = logging.getLogger(__name__)

METHODS = ("MPC", "RQL", "SQL")
CRITIC_TARGETS = ("residual", "previous")
CRITIC_PROJECTIONS = ("cost-floor", "psd", "none")


@dataclass(frozen=True)
class ControllerSpec:
    """Settings of one predictive controller.

    ``horizon`` counts prediction stages; the horizon duration is
    ``horizon * delta`` seconds. ``buffer_size`` is ignored by MPC.

    Critic options (RQL and SQL only):

    critic_target
        ``"residual"`` fits the TD loss with the same weights on both sides
        of the temporal difference; ``"previous"`` freezes the target at the
        previous step's weights (fitted value iteration).
    critic_projection
        ``"cost-floor"`` keeps ``Q >= rho``, ``"psd"`` keeps ``Q`` convex,
        ``"none"`` leaves the least-squares weights untouched.
    critic_gamma
        Discount inside the temporal difference.
    critic_max_weight
        Updates with a larger (or non-finite) weight are discarded.
    """

    method: str = "MPC"
    horizon: int = 12
    delta: float = 0.1
    gamma: float = 1.0
    R: tuple = DEFAULT_R
    buffer_size: int = 20
    v_max: float = V_MAX
    omega_max: float = OMEGA_MAX
    evals_per_dim: int = 100
    tol: float = 1e-4
    optimizer: str = "lbfgsb"
    critic_target: str = "residual"
    critic_projection: str = "cost-floor"
    critic_gamma: float = 1.0
    critic_rcond: float = 1e-12
    critic_max_weight: float = 1e12
    init_jitter: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidConfigError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidConfigError(f"delta must be positive, got {self.delta!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfigError(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if self.buffer_size < 1:
            raise InvalidConfigError("buffer_size must be at least 1")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise InvalidConfigError("action bounds must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.critic_target not in CRITIC_TARGETS:
            raise InvalidConfigError(f"critic_target must be one of {CRITIC_TARGETS}, got {self.critic_target!r}")
        if self.critic_projection not in CRITIC_PROJECTIONS:
            raise InvalidConfigError(
                f"critic_projection must be one of {CRITIC_PROJECTIONS}, got {self.critic_projection!r}"
            )
        if not 0.0 < self.critic_gamma <= 1.0:
            raise InvalidConfigError(f"critic_gamma must lie in (0, 1], got {self.critic_gamma!r}")
        if self.critic_rcond < 0 or not self.critic_max_weight > 0:
            raise InvalidConfigError("invalid critic settings")
        if self.evals_per_dim < 1 or self.tol <= 0 or self.init_jitter < 0:
            raise InvalidConfigError("invalid optimizer settings")
        object.__setattr__(self, "R", tuple(float(r) for r in cost_matrix(self.R)))

    @property
    def horizon_seconds(self) -> float:
        return self.horizon * self.delta

    @property
    def lower(self) -> np.ndarray:
        return np.tile([-self.v_max, -self.omega_max], self.horizon)

    @property
    def upper(self) -> np.ndarray:
        return np.tile([self.v_max, self.omega_max], self.horizon)


def _as_sequence(seq, spec: ControllerSpec) -> np.ndarray:
    u = np.asarray(seq, dtype=float).reshape(-1)
    if u.size != 2 * spec.horizon:
        raise InvalidInputError(
            f"action sequence has {u.size // 2} stages, controller horizon is {spec.horizon}"
        )
    return u


def _value_and_grad(method: str, state, u, P, delta: float, gamma: float, R, want_grad: bool = True):
    """Objective of a flat sequence ``u`` and its gradient by a reverse pass.

    ``P`` is the symmetric critic matrix (``Q = chi^T P chi``); unused by MPC.
    Plain floats on purpose: this runs inside the optimizer loop.
    """
    n = len(u) // 2
    xs = [float(state[0])]
    ys = [float(state[1])]
    ths = [float(state[2])]
    for i in range(n - 1):
        v, om, th = u[2 * i], u[2 * i + 1], ths[i]
        xs.append(xs[i] + delta * v * math.cos(th))
        ys.append(ys[i] + delta * v * math.sin(th))
        ths.append(th + delta * om)

    total = 0.0
    grads = []  # d(stage term)/d(chi) per stage
    weight = 1.0
    for i in range(n):
        chi = (xs[i], ys[i], ths[i], u[2 * i], u[2 * i + 1])
        if method == "MPC" or (method == "RQL" and i < n - 1):
            terms = [R[k] * chi[k] for k in range(5)]
            total += weight * sum(terms[k] * chi[k] for k in range(5))
            if want_grad:
                grads.append([2.0 * weight * t for t in terms])
            if method == "MPC":
                weight *= gamma
        else:
            Pchi = [sum(P[a][b] * chi[b] for b in range(5)) for a in range(5)]
            total += sum(chi[a] * Pchi[a] for a in range(5))
            if want_grad:
                grads.append([2.0 * q for q in Pchi])
    if not want_grad:
        return total, None

    grad = [0.0] * (2 * n)
    lx, ly, lth = grads[n - 1][0], grads[n - 1][1], grads[n - 1][2]
    grad[2 * n - 2], grad[2 * n - 1] = grads[n - 1][3], grads[n - 1][4]
    for i in range(n - 2, -1, -1):
        g = grads[i]
        v, th = u[2 * i], ths[i]
        c, s = math.cos(th), math.sin(th)
        grad[2 * i] = g[3] + delta * (c * lx + s * ly)
        grad[2 * i + 1] = g[4] + delta * lth
        lth = g[2] + lth + delta * v * (c * ly - s * lx)
        lx = g[0] + lx
        ly = g[1] + ly
    return total, grad


def _stage_values(method: str, state, u, w, delta: float, gamma: float, R) -> float:
    P = None if w is None else _critic.weights_to_matrix(w).tolist()
    return _value_and_grad(method, state, u, P, delta, gamma, R, want_grad=False)[0]


def mpc_objective(state, seq, spec: ControllerSpec) -> float:
    """Discounted running costs over all ``N`` predicted stages."""
    u = _as_sequence(seq, spec)
    return _stage_values("MPC", state, u.tolist(), None, spec.delta, spec.gamma, spec.R)


def rql_objective(state, seq, w, spec: ControllerSpec) -> float:
    """Running costs over the first ``N-1`` stages plus the critic at stage ``N``."""
    u = _as_sequence(seq, spec)
    w = np.asarray(w, dtype=float)
    if w.shape != (_critic.N_FEATURES,):
        raise InvalidInputError("critic weight dimension mismatch")
    return _stage_values("RQL", state, u.tolist(), w.tolist(), spec.delta, 1.0, spec.R)


def sql_objective(state, seq, w, spec: ControllerSpec) -> float:
    """Critic values summed over every predicted stage."""
    u = _as_sequence(seq, spec)
    w = np.asarray(w, dtype=float)
    if w.shape != (_critic.N_FEATURES,):
        raise InvalidInputError("critic weight dimension mismatch")
    return _stage_values("SQL", state, u.tolist(), w.tolist(), spec.delta, 1.0, spec.R)


class OptimizerError(RuntimeError):
    """The sequence optimizer could not produce a usable result."""


@dataclass(frozen=True)
class OptimizerResult:
    argmin: np.ndarray
    value: float
    evaluations: int
    converged: bool


OPTIMIZERS = ("lbfgsb", "nelder-mead")


def minimize_sequence(
    objective: Callable,
    init,
    bounds,
    max_evals: Optional[int] = None,
    tol: float = 1e-4,
    method: str = "lbfgsb",
    jac: bool = False,
) -> OptimizerResult:
    """Minimize ``objective`` over a box-constrained flat action sequence.

    ``bounds`` is a ``(lower, upper)`` pair of arrays. With ``jac=True`` the
    objective returns ``(value, gradient)``; otherwise L-BFGS-B falls back to
    finite differences. The returned point is feasible and never worse than
    ``init``; a non-finite objective value raises :class:`OptimizerError`.
    """
    if method not in OPTIMIZERS:
        raise InvalidConfigError(f"unknown optimizer {method!r}")
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    x0 = np.clip(np.asarray(init, dtype=float).reshape(-1), lower, upper)
    dim = x0.size
    if max_evals is None:
        max_evals = 100 * dim

    evals = 0

    def f(z):
        nonlocal evals
        evals += 1
        out = objective(z)
        val = out[0] if jac else out
        if not math.isfinite(val):
            raise OptimizerError(f"objective returned {val!r} at {z!r}")
        return (val, np.asarray(out[1], dtype=float)) if jac else val

    def value(z):
        out = f(z)
        return out[0] if jac else out

    f0 = value(x0)
    box = list(zip(lower, upper))
    if method == "lbfgsb":
        res = minimize(
            f,
            x0,
            jac=jac or None,
            method="L-BFGS-B",
            bounds=box,
            options={"maxfun": max_evals, "maxiter": max_evals, "ftol": tol * 1e-6, "gtol": 1e-10},
        )
    else:
        fun = value
        step = 0.1 * (upper - lower)
        simplex = np.tile(x0, (dim + 1, 1))
        for i in range(dim):
            # step inward if the vertex would leave the box
            simplex[i + 1, i] += step[i] if x0[i] + step[i] <= upper[i] else -step[i]
        res = minimize(
            fun,
            x0,
            method="Nelder-Mead",
            bounds=box,
            options={
                "initial_simplex": simplex,
                "maxfev": max_evals,
                "xatol": tol,
                "fatol": tol * max(abs(f0), 1e-12),
                "adaptive": dim > 4,
            },
        )
    x = np.clip(res.x, lower, upper)
    val = value(x)
    if not val <= f0:
        x, val = x0, f0
    return OptimizerResult(x, float(val), evals, bool(res.success))


class Controller:
    """Stateful receding-horizon controller for one episode.

    Call :meth:`compute_action` once per sampling period with the goal-frame
    state; the returned action is meant to be held for ``spec.delta`` seconds.
    RQL and SQL refresh the critic first, then run the actor.
    """

    def __init__(self, spec: ControllerSpec, seed: int = 0):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.buffer = _critic.ReplayBuffer(spec.buffer_size)
        self.weights = np.zeros(_critic.N_FEATURES)
        self.last_update: Optional[_critic.CriticUpdate] = None
        self.last_result: Optional[OptimizerResult] = None
        self.warm_start = np.zeros(2 * spec.horizon)
        self.prev_action = np.zeros(2)
        self._history: list = []  # last two (state, action) pairs
        self.rejected_updates = 0

    @property
    def bounds(self):
        return self.spec.lower, self.spec.upper

    def objective(self, state, with_grad: bool = False) -> Callable:
        """The method's actor objective at ``state`` as a function of the flat sequence."""
        spec = self.spec
        s = [float(v) for v in state]
        if spec.method == "MPC":
            P, gamma = None, spec.gamma
        else:
            P, gamma = _critic.weights_to_matrix(self.weights).tolist(), 1.0
        if with_grad:
            return lambda u: _value_and_grad(spec.method, s, u.tolist(), P, spec.delta, gamma, spec.R)
        return lambda u: _value_and_grad(spec.method, s, u.tolist(), P, spec.delta, gamma, spec.R, False)[0]

    def observe(self, state) -> None:
        # the pair applied two steps ago becomes a complete transition once
        # the action that followed it is known
        if len(self._history) == 2:
            (s0, a0), (s1, a1) = self._history
            self.buffer.push(_critic.Transition(s0, a0, running_cost(s0, a0, self.spec.R), s1, a1))

    def update_critic(self) -> None:
        if len(self.buffer) < 2:
            return
        spec = self.spec
        if spec.critic_target == "previous":
            upd = _critic.update_critic(self.buffer, self.weights, spec.critic_gamma, spec.critic_rcond)
        else:
            upd = _critic.fit_residual(self.buffer, spec.critic_gamma, spec.critic_rcond)
        self.last_update = upd
        w = upd.weights
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > spec.critic_max_weight:
            log.debug("critic update rejected (weights diverged); keeping previous weights")
            self.rejected_updates += 1
            return
        if spec.critic_projection == "cost-floor":
            w = _critic.project_above_cost(w, spec.R)
        elif spec.critic_projection == "psd":
            w = _critic.project_psd(w, 1e-3)
        self.weights = w

    def compute_action(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        spec = self.spec
        if spec.method != "MPC":
            self.observe(state)
            self.update_critic()
        init = self.warm_start
        if spec.init_jitter > 0:
            init = init + spec.init_jitter * self.rng.uniform(-1, 1, init.size) * spec.upper
        use_grad = spec.optimizer == "lbfgsb"
        try:
            res = minimize_sequence(
                self.objective(state, with_grad=use_grad),
                init,
                self.bounds,
                max_evals=spec.evals_per_dim * 2 * spec.horizon,
                tol=spec.tol,
                method=spec.optimizer,
                jac=use_grad,
            )
            self.last_result = res
            seq = res.argmin
            action = clamp_action(seq[:2], spec.v_max, spec.omega_max)
        except OptimizerError as exc:
            log.warning("actor optimization failed, holding previous action: %s", exc)
            seq = np.tile(self.prev_action, spec.horizon)
            action = self.prev_action.copy()
        self.warm_start = np.concatenate([seq[2:], seq[-2:]])
        self.prev_action = action
        self._history = (self._history + [(state.copy(), action.copy())])[-2:]
        return action
