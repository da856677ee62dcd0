import dataclasses
import math

import numpy as np
import pytest

from predictive_rl.actors import ControllerSpec
from predictive_rl.costs import accumulated_cost
from predictive_rl.dynamics import InvalidConfigError, Pose
from predictive_rl.harness import (
    ExperimentConfig,
    build_report,
    cell_seed,
    default_starts,
    n_steps,
    run_benchmark,
    run_episode,
)


def short_cfg(**kw):
    base = dict(
        starts=(Pose(-1.0, 0.0, math.pi), Pose(0.0, 1.0, math.pi / 2)),
        methods=("MPC",),
        horizons=(2,),
        repetitions=1,
        duration=1.0,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_default_starts_face_away_from_goal():
    starts = default_starts()
    assert len(starts) == 3
    for p, b in zip(starts, (180, 135, 90)):
        assert math.hypot(p.x, p.y) == pytest.approx(1.0)
        assert p.theta == pytest.approx(math.radians(b))
        # heading points along the outward radius
        assert math.cos(p.theta) * p.x + math.sin(p.theta) * p.y == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        short_cfg(repetitions=0)
    with pytest.raises(InvalidConfigError):
        short_cfg(duration=-1)
    with pytest.raises(InvalidConfigError):
        short_cfg(plant="rk2")
    with pytest.raises(InvalidConfigError):
        short_cfg(starts=(Pose(math.nan, 0, 0),))
    with pytest.raises(InvalidConfigError):
        short_cfg(method_overrides={"SQL": {"delta": -1.0}})


def test_n_steps():
    assert n_steps(30.0, 0.1) == 300
    assert n_steps(1.0, 0.3) == 4
    assert n_steps(0.05, 0.1) == 1


def test_method_overrides_apply_per_method():
    cfg = short_cfg(methods=("MPC", "SQL"), method_overrides={"SQL": {"buffer_size": 7}})
    assert cfg.spec_for("SQL", 3).buffer_size == 7
    assert cfg.spec_for("SQL", 3).horizon == 3
    assert cfg.spec_for("MPC", 2).buffer_size == 20


def test_episode_log_invariants():
    cfg = short_cfg(duration=1.05)
    ep = run_episode(cfg, "MPC", cfg.starts[0], horizon=2)
    assert len(ep.records) == math.ceil(1.05 / 0.1) == 11
    for k, r in enumerate(ep.records):
        assert r.time == k * 0.1
    assert ep.accumulated_cost == accumulated_cost(ep.records, 0.1)
    assert not ep.failed and ep.final_pose is not None
    # first record is the start pose in the goal frame
    np.testing.assert_allclose(ep.records[0].state, [-1, 0, math.pi], atol=1e-15)


def test_start_at_goal_stays():
    cfg = short_cfg(starts=(Pose(0.0, 0.0, 0.0),), duration=3.0, horizons=(4,))
    ep = run_episode(cfg, "MPC", cfg.starts[0], horizon=4)
    _, S, _, _ = ep.arrays()
    assert np.max(np.hypot(S[:, 0], S[:, 1])) < 1e-2
    assert ep.accumulated_cost < 1e-3
    assert ep.time_to_goal == 0.0


def test_mpc_reaches_goal_from_behind():
    cfg = short_cfg(starts=(Pose(-1.0, 0.0, 0.0),), duration=12.0, horizons=(12,))
    ep = run_episode(cfg, "MPC", cfg.starts[0], horizon=12)
    _, S, _, _ = ep.arrays()
    d = np.hypot(S[:, 0], S[:, 1])
    assert d[-1] < 0.05
    assert math.isfinite(ep.time_to_goal)


def test_episode_is_deterministic():
    cfg = short_cfg(methods=("RQL",), action_noise=0.1)
    a = run_episode(cfg, "RQL", cfg.starts[1], horizon=2, seed=5)
    b = run_episode(cfg, "RQL", cfg.starts[1], horizon=2, seed=5)
    assert a.records == b.records
    c = run_episode(cfg, "RQL", cfg.starts[1], horizon=2, seed=6)
    assert a.records != c.records


def test_controller_failure_marks_episode(monkeypatch):
    from predictive_rl import harness

    calls = {"n": 0}
    real = harness.Controller.compute_action

    def flaky(self, state):
        calls["n"] += 1
        if calls["n"] == 4:
            raise RuntimeError("boom")
        return real(self, state)

    monkeypatch.setattr(harness.Controller, "compute_action", flaky)
    cfg = short_cfg()
    ep = run_episode(cfg, "MPC", cfg.starts[0], horizon=2)
    assert ep.failed and "boom" in ep.error
    assert len(ep.records) == 3
    report = build_report([ep], cfg)
    cell = report.cells[0]
    assert cell.failed == 1 and cell.cost_mean is None and cell.success_rate == 0


def test_rk4_plant_differs_from_euler():
    cfg = short_cfg()
    a = run_episode(cfg, "MPC", cfg.starts[1], horizon=2)
    b = run_episode(dataclasses.replace(cfg, plant="rk4-fine"), "MPC", cfg.starts[1], horizon=2)
    assert a.records[0] == b.records[0]
    assert a.records[-1].state != b.records[-1].state


def test_cell_seeds_are_pure_and_distinct():
    seeds = {cell_seed(7, m, h, p, r) for m in range(3) for h in range(2) for p in range(3) for r in range(5)}
    assert len(seeds) == 90
    assert cell_seed(7, 1, 0, 2, 3) == cell_seed(7, 1, 0, 2, 3)
    assert cell_seed(7, 1, 0, 2, 3) != cell_seed(8, 1, 0, 2, 3)


def test_single_cell_report_wraps_one_log():
    cfg = short_cfg(starts=(Pose(-1.0, 0.0, math.pi),))
    rep = run_benchmark(cfg)
    assert len(rep.logs) == 1 and len(rep.cells) == 1
    c, ep = rep.cells[0], rep.logs[0]
    assert c.cost_mean == c.cost_min == c.cost_max == ep.accumulated_cost
    assert c.episodes == 1


def test_grid_counts_and_offline_aggregation():
    cfg = ExperimentConfig(duration=0.3, repetitions=5, horizons=(2,))
    rep = run_benchmark(cfg)
    assert len(rep.logs) == 45
    assert len(rep.cells) == 9
    for c in rep.cells:
        eps = [e for e in rep.logs if (e.method, e.horizon, e.start_index) == (c.method, c.horizon, c.start_index)]
        assert len(eps) == 5
        assert len({e.seed for e in eps}) == 5
        costs = [0.1 * math.fsum(r.cost for r in e.records) for e in eps]
        assert c.cost_mean == pytest.approx(np.mean(costs), rel=1e-12)
    assert rep.config["cells"]["SQL/N2"]["M"] == 20


def test_noisy_repetitions_use_their_own_seeds():
    cfg = short_cfg(repetitions=2, action_noise=0.2, starts=(Pose(-1.0, 0.0, math.pi),))
    rep = run_benchmark(cfg)
    a, b = rep.logs
    assert a.seed != b.seed and a.records != b.records


def test_changing_one_seed_leaves_other_cells():
    cfg = short_cfg(repetitions=2, action_noise=0.2)
    r1 = run_benchmark(cfg)
    r2 = run_benchmark(dataclasses.replace(cfg, seed=1))
    # master seed changes every cell seed, but each cell depends only on its own seed
    for a, b in zip(r1.logs, r2.logs):
        again = run_episode(cfg, a.method, cfg.starts[a.start_index], a.horizon, seed=a.seed, start_index=a.start_index)
        assert again.records == a.records
        assert a.seed != b.seed


def test_parallel_matches_serial():
    cfg = short_cfg(methods=("MPC", "SQL"))
    s = run_benchmark(cfg, jobs=1)
    p = run_benchmark(cfg, jobs=2)
    assert [e.records for e in s.logs] == [e.records for e in p.logs]
    assert s.to_dict() == p.to_dict()
