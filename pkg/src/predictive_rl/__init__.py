"""Predictive control and predictive reinforcement learning for a differential-drive robot.

Three receding-horizon controllers share one unicycle predictor: plain MPC,
rollout Q-learning (RQL, learned terminal cost) and stacked Q-learning
(SQL, learned cost at every stage).
"""

from importlib.metadata import PackageNotFoundError, version as _version

from .actors import METHODS, Controller, ControllerSpec, mpc_objective, rql_objective, sql_objective
from .costs import DEFAULT_R, accumulated_cost, running_cost
from .dynamics import Pose, euler_step, rk4_step, rollout, to_goal_frame
from .harness import EpisodeLog, ExperimentConfig, run_benchmark, run_episode

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "METHODS",
    "Controller",
    "ControllerSpec",
    "mpc_objective",
    "rql_objective",
    "sql_objective",
    "DEFAULT_R",
    "accumulated_cost",
    "running_cost",
    "Pose",
    "euler_step",
    "rk4_step",
    "rollout",
    "to_goal_frame",
    "EpisodeLog",
    "ExperimentConfig",
    "run_benchmark",
    "run_episode",
]
