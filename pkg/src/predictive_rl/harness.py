"""Closed-loop episodes and the benchmark grid over methods, horizons and starts."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .actors import METHODS, Controller, ControllerSpec
from .costs import StageRecord, accumulated_cost, running_cost
from .dynamics import (
    GOAL,
    WORLD,
    InvalidConfigError,
    Pose,
    clamp_action,
    euler_step,
    rk4_fine,
    to_goal_frame,
)

log = logging.getLogger(__name__)

PLANTS = ("euler", "rk4-fine")


def default_starts(radius: float = 1.0, bearings_deg: Sequence[float] = (180.0, 135.0, 90.0)) -> tuple:
    """Poses on a circle around the origin, each heading directly away from it."""
    out = []
    for b in bearings_deg:
        th = math.radians(b)
        out.append(Pose(radius * math.cos(th), radius * math.sin(th), th))
    return tuple(out)


@dataclass(frozen=True)
class ExperimentConfig:
    """Benchmark grid and episode settings.

    ``controller`` holds the shared controller settings; its ``method`` and
    ``horizon`` are replaced per cell. ``method_overrides`` maps a method tag
    to keyword overrides of :class:`ControllerSpec`.
    """

    starts: tuple = field(default_factory=default_starts)
    goal: Pose = Pose(0.0, 0.0, 0.0)
    methods: tuple = METHODS
    horizons: tuple = (12, 2)
    controller: ControllerSpec = ControllerSpec()
    method_overrides: dict = field(default_factory=dict)
    repetitions: int = 5
    duration: float = 30.0
    position_tol: float = 0.05
    heading_tol: float = 0.1
    seed: int = 0
    plant: str = "euler"
    action_noise: float = 0.0

    def __post_init__(self):
        if self.repetitions < 1:
            raise InvalidConfigError("repetitions must be at least 1")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise InvalidConfigError("duration must be positive")
        if self.position_tol <= 0 or self.heading_tol <= 0:
            raise InvalidConfigError("success thresholds must be positive")
        if self.plant not in PLANTS:
            raise InvalidConfigError(f"plant must be one of {PLANTS}, got {self.plant!r}")
        if self.action_noise < 0:
            raise InvalidConfigError("action_noise must be non-negative")
        if not self.starts:
            raise InvalidConfigError("at least one starting pose is required")
        for p in (*self.starts, self.goal):
            if not all(math.isfinite(c) for c in (p.x, p.y, p.theta)):
                raise InvalidConfigError("poses must be finite")
        for m in self.methods:
            if m not in METHODS:
                raise InvalidConfigError(f"unknown method {m!r}")
        for m in self.method_overrides:
            if m not in METHODS:
                raise InvalidConfigError(f"overrides for unknown method {m!r}")
        if not self.methods or not self.horizons:
            raise InvalidConfigError("methods and horizons must be non-empty")
        for h in self.horizons:
            if int(h) != h or h < 1:
                raise InvalidConfigError(f"horizon must be a positive integer, got {h!r}")
        # build every cell spec once so bad overrides fail here
        for m in set(self.methods) | set(self.method_overrides):
            for h in self.horizons:
                self.spec_for(m, h)

    def spec_for(self, method: str, horizon: int) -> ControllerSpec:
        kw = dict(self.method_overrides.get(method, {}))
        return dataclasses.replace(self.controller, method=method, horizon=int(horizon), **kw)

    @property
    def n_steps(self) -> int:
        return n_steps(self.duration, self.controller.delta)


def n_steps(duration: float, delta: float) -> int:
    # guard against 30 / 0.1 = 300.00000000000006
    return max(1, math.ceil(round(duration / delta, 9)))


@dataclass
class EpisodeLog:
    """Closed-loop record of one episode; states are in the goal frame."""

    method: str
    horizon: int
    start: Pose
    seed: int
    delta: float
    records: list
    final_pose: Optional[Pose] = None
    time_to_goal: float = math.inf
    failed: bool = False
    error: str = ""
    start_index: int = 0
    repetition: int = 0

    @property
    def accumulated_cost(self) -> float:
        return accumulated_cost(self.records, self.delta)

    @property
    def reached(self) -> bool:
        return not self.failed and math.isfinite(self.time_to_goal)

    def arrays(self):
        """``(t, states (K,3), actions (K,2), costs)`` as numpy arrays."""
        t = np.array([r.time for r in self.records], dtype=float)
        S = np.array([r.state for r in self.records], dtype=float).reshape(-1, 3)
        A = np.array([r.action for r in self.records], dtype=float).reshape(-1, 2)
        c = np.array([r.cost for r in self.records], dtype=float)
        return t, S, A, c


def _in_goal(p, cfg: ExperimentConfig) -> bool:
    return math.hypot(p[0], p[1]) < cfg.position_tol and abs(p[2]) < cfg.heading_tol


def run_episode(
    cfg: ExperimentConfig,
    method: str,
    start: Pose,
    horizon: Optional[int] = None,
    seed: int = 0,
    start_index: int = 0,
    repetition: int = 0,
) -> EpisodeLog:
    """Simulate one closed-loop episode from ``start`` (world frame)."""
    horizon = cfg.horizons[0] if horizon is None else horizon
    spec = cfg.spec_for(method, horizon)
    delta = spec.delta
    rng = np.random.default_rng(seed)
    ctrl = Controller(spec, seed=seed)
    step = euler_step if cfg.plant == "euler" else rk4_fine
    noise_scale = cfg.action_noise * np.array([spec.v_max, spec.omega_max])

    ep = EpisodeLog(method, int(horizon), start, int(seed), delta, [], start_index=start_index, repetition=repetition)
    world = start.as_array()
    for k in range(n_steps(cfg.duration, delta)):
        t = k * delta
        try:
            rel = to_goal_frame(Pose.from_array(world, WORLD), cfg.goal).as_array()
            action = ctrl.compute_action(rel)
            if cfg.action_noise > 0:
                action = clamp_action(action + noise_scale * rng.standard_normal(2), spec.v_max, spec.omega_max)
            cost = running_cost(rel, action, spec.R)
            world = step(world, action, delta)
        except Exception as exc:  # keep the partial log
            log.warning("episode %s N=%d failed at t=%.3f: %s", method, horizon, t, exc)
            ep.failed, ep.error = True, f"{type(exc).__name__}: {exc}"
            break
        ep.records.append(StageRecord(t, tuple(float(v) for v in rel), tuple(float(v) for v in action), cost))
        if not math.isfinite(ep.time_to_goal) and _in_goal(rel, cfg):
            ep.time_to_goal = t
    if not ep.failed:
        ep.final_pose = to_goal_frame(Pose.from_array(world, WORLD), cfg.goal)
        if not math.isfinite(ep.time_to_goal) and _in_goal(ep.final_pose.as_array(), cfg):
            ep.time_to_goal = n_steps(cfg.duration, delta) * delta
    return ep


def cell_seed(master: int, method_idx: int, horizon_idx: int, start_idx: int, repetition: int) -> int:
    """Seed of one benchmark cell, a pure function of the master seed and indices."""
    ss = np.random.SeedSequence(int(master), spawn_key=(method_idx, horizon_idx, start_idx, repetition))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class CellSummary:
    method: str
    horizon: int
    start_index: int
    start: tuple
    episodes: int
    failed: int
    cost_mean: Optional[float]
    cost_min: Optional[float]
    cost_max: Optional[float]
    time_to_goal_mean: Optional[float]
    success_rate: float


@dataclass
class BenchmarkReport:
    cells: list
    config: dict
    logs: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"config": self.config, "cells": [dataclasses.asdict(c) for c in self.cells]}

    def cell(self, method: str, horizon: int, start_index: int) -> CellSummary:
        for c in self.cells:
            if (c.method, c.horizon, c.start_index) == (method, horizon, start_index):
                return c
        raise KeyError((method, horizon, start_index))


def _order_key(cfg: ExperimentConfig):
    m_idx = {m: i for i, m in enumerate(cfg.methods)}
    h_idx = {h: i for i, h in enumerate(cfg.horizons)}
    return lambda ep: (h_idx.get(ep.horizon, len(h_idx)), m_idx.get(ep.method, len(m_idx)), ep.start_index, ep.repetition)


def config_echo(cfg: ExperimentConfig) -> dict:
    """Plain-data view of the configuration, including every resolved cell spec."""
    from .config import config_to_dict

    d = config_to_dict(cfg)
    d["cells"] = {
        f"{m}/N{h}": {
            "R": list(s.R),
            "gamma": s.gamma,
            "delta": s.delta,
            "N": s.horizon,
            "M": s.buffer_size,
            "horizon_seconds": s.horizon_seconds,
        }
        for h in cfg.horizons
        for m in cfg.methods
        for s in [cfg.spec_for(m, h)]
    }
    return d


def build_report(logs: Sequence[EpisodeLog], cfg: ExperimentConfig) -> BenchmarkReport:
    """Aggregate episode logs per (method, horizon, start)."""
    logs = sorted(logs, key=_order_key(cfg))
    groups: dict = {}
    for ep in logs:
        groups.setdefault((ep.method, ep.horizon, ep.start_index), []).append(ep)
    cells = []
    for (m, h, p), eps in groups.items():
        ok = [e for e in eps if not e.failed]
        costs = [e.accumulated_cost for e in ok]
        ttg = [e.time_to_goal for e in ok if math.isfinite(e.time_to_goal)]
        cells.append(
            CellSummary(
                method=m,
                horizon=h,
                start_index=p,
                start=(eps[0].start.x, eps[0].start.y, eps[0].start.theta),
                episodes=len(eps),
                failed=len(eps) - len(ok),
                cost_mean=float(np.mean(costs)) if costs else None,
                cost_min=min(costs) if costs else None,
                cost_max=max(costs) if costs else None,
                time_to_goal_mean=float(np.mean(ttg)) if ttg else None,
                success_rate=sum(e.reached for e in eps) / len(eps),
            )
        )
    return BenchmarkReport(cells, config_echo(cfg), list(logs))


def _job(args):
    cfg, m, h, p, r, seed = args
    return run_episode(cfg, m, cfg.starts[p], horizon=h, seed=seed, start_index=p, repetition=r)


def run_benchmark(
    cfg: ExperimentConfig,
    jobs: int = 1,
    progress: Optional[Callable[[EpisodeLog], None]] = None,
) -> BenchmarkReport:
    """Run every (horizon, method, start, repetition) episode and aggregate.

    With no actuation noise and no optimizer jitter the repetitions of a
    cell are identical, so each cell is simulated once and the log reused
    under every repetition's seed.
    """
    deterministic = cfg.action_noise == 0 and all(
        cfg.spec_for(m, h).init_jitter == 0 for m in cfg.methods for h in cfg.horizons
    )
    tasks = []
    for hi, h in enumerate(cfg.horizons):
        for mi, m in enumerate(cfg.methods):
            for p in range(len(cfg.starts)):
                reps = 1 if deterministic else cfg.repetitions
                for r in range(reps):
                    tasks.append((cfg, m, h, p, r, cell_seed(cfg.seed, mi, hi, p, r)))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]

    logs = []
    for ep in results:
        logs.append(ep)
        if deterministic:
            mi, hi = cfg.methods.index(ep.method), cfg.horizons.index(ep.horizon)
            for r in range(1, cfg.repetitions):
                seed = cell_seed(cfg.seed, mi, hi, ep.start_index, r)
                logs.append(dataclasses.replace(ep, seed=seed, repetition=r, records=list(ep.records)))
    if progress is not None:
        for ep in logs:
            progress(ep)
    return build_report(logs, cfg)
