"""Differential-drive kinematics, one-step integrators and goal-frame transforms.

States are ``(x, y, theta)`` arrays and actions are ``(v, omega)`` arrays.
Headings are kept unwrapped inside the plant; :func:`wrap_angle` maps them
to the interval ``(-pi, pi]`` when needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

V_MAX = 0.22
OMEGA_MAX = 2.48

WORLD = "world"
GOAL = "goal"


class InvalidInputError(ValueError):
    """Raised for non-finite or malformed numerical input."""


class InvalidConfigError(ValueError):
    """Raised for invalid controller or integrator settings."""


@dataclass(frozen=True)
class Pose:
    """A planar pose tagged with the frame it is expressed in."""

    x: float
    y: float
    theta: float
    frame: str = WORLD

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, arr, frame: str = WORLD) -> "Pose":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]), frame)


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"non-finite input: {arr!r}")


def wrap_angle(theta):
    """Map an angle (scalar or array) to ``(-pi, pi]``."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    # mod puts pi at -pi; flip those back so pi itself is kept
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def clamp_action(action, v_max: float = V_MAX, omega_max: float = OMEGA_MAX) -> np.ndarray:
    """Clip ``(v, omega)`` to the actuator box."""
    a = np.asarray(action, dtype=float)
    return np.array([min(max(a[0], -v_max), v_max), min(max(a[1], -omega_max), omega_max)])


def derivative(state, action) -> np.ndarray:
    """Right-hand side of the unicycle model, ``(v cos th, v sin th, omega)``."""
    s = np.asarray(state, dtype=float)
    a = np.asarray(action, dtype=float)
    _check_finite(s, a)
    return np.array([a[0] * math.cos(s[2]), a[0] * math.sin(s[2]), a[1]])


def _check_delta(delta: float) -> None:
    if not (delta > 0 and math.isfinite(delta)):
        raise InvalidConfigError(f"sampling time must be positive, got {delta!r}")


def euler_step(state, action, delta: float) -> np.ndarray:
    """One forward-Euler step with the action held for ``delta`` seconds."""
    _check_delta(delta)
    s = np.asarray(state, dtype=float)
    return s + delta * derivative(s, action)


def rk4_step(state, action, delta: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step with a zero-order-hold action."""
    _check_delta(delta)
    s = np.asarray(state, dtype=float)
    k1 = derivative(s, action)
    k2 = derivative(s + 0.5 * delta * k1, action)
    k3 = derivative(s + 0.5 * delta * k2, action)
    k4 = derivative(s + delta * k3, action)
    return s + delta / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_fine(state, action, delta: float, substeps: int = 10) -> np.ndarray:
    """Integrate over ``delta`` with ``substeps`` RK4 steps."""
    s = np.asarray(state, dtype=float)
    h = delta / substeps
    for _ in range(substeps):
        s = rk4_step(s, action, h)
    return s


def rollout(state0, actions: Sequence, delta: float) -> np.ndarray:
    """Predicted states ``x_1 = state0, ..., x_N`` under an action sequence.

    Returns an ``(N, 3)`` array; the last action does not move the prediction
    because only ``N`` states are produced.
    """
    seq = np.asarray(actions, dtype=float).reshape(-1, 2)
    if len(seq) == 0:
        raise InvalidInputError("action sequence must be non-empty")
    out = np.empty((len(seq), 3))
    out[0] = np.asarray(state0, dtype=float)
    _check_finite(out[0])
    for i in range(1, len(seq)):
        out[i] = euler_step(out[i - 1], seq[i - 1], delta)
    return out


def homogeneous(pose: Pose) -> np.ndarray:
    """4x4 homogeneous transform of the goal frame (rotation about z, planar offset)."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return np.array(
        [
            [c, -s, 0.0, pose.x],
            [s, c, 0.0, pose.y],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def to_goal_frame(robot: Pose, goal: Pose) -> Pose:
    """Express a world-frame robot pose in the frame attached to ``goal``.

    The position goes through the inverse of the goal's homogeneous transform,
    so the goal itself maps to the origin. The heading becomes
    ``theta - theta_goal`` wrapped to ``(-pi, pi]``.
    """
    if robot.frame != WORLD or goal.frame != WORLD:
        raise InvalidInputError("both poses must be given in the world frame")
    _check_finite(robot.as_array(), goal.as_array())
    c, s = math.cos(goal.theta), math.sin(goal.theta)
    dx, dy = robot.x - goal.x, robot.y - goal.y
    return Pose(c * dx + s * dy, -s * dx + c * dy, wrap_angle(robot.theta - goal.theta), GOAL)


def from_goal_frame(pose: Pose, goal: Pose) -> Pose:
    """Inverse of :func:`to_goal_frame` (heading wrapped)."""
    if pose.frame != GOAL or goal.frame != WORLD:
        raise InvalidInputError("expected a goal-frame pose and a world-frame goal")
    p = homogeneous(goal) @ np.array([pose.x, pose.y, 0.0, 1.0])
    return Pose(float(p[0]), float(p[1]), wrap_angle(pose.theta + goal.theta), WORLD)
