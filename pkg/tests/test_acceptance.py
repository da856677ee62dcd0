"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The closed-loop simulations behind criteria 1-3 run once per session.
"""

import math
import time

import numpy as np
import pytest

from predictive_rl import cli
from predictive_rl.actors import Controller, ControllerSpec, mpc_objective, rql_objective, sql_objective
from predictive_rl.critic import ReplayBuffer, Transition, q_value, td_error, update_critic
from predictive_rl.dynamics import euler_step, rk4_fine
from predictive_rl.harness import ExperimentConfig, run_benchmark
from predictive_rl.mdp import greedy_trajectory, policy_iteration, random_mdp, stacked_q, value_iteration

METHODS = ("MPC", "RQL", "SQL")


def _bench(horizon):
    cfg = ExperimentConfig(horizons=(horizon,), repetitions=1)
    t0 = time.perf_counter()
    rep = run_benchmark(cfg)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def short_horizon():
    return _bench(2)


@pytest.fixture(scope="module")
def long_horizon():
    return _bench(12)


def _mean_cost(rep, method):
    return float(np.mean([c.cost_mean for c in rep.cells if c.method == method]))


def test_c01_method_ranking(short_horizon, criterion):
    rep, elapsed = short_horizon
    J = {m: _mean_cost(rep, m) for m in METHODS}
    ok = J["SQL"] <= J["RQL"] <= J["MPC"] and J["SQL"] <= 0.95 * J["MPC"] and elapsed <= 300
    detail = "N=2 mean cost " + ", ".join(f"{m} {J[m]:.1f}" for m in METHODS) + f" ({elapsed:.0f} s)"
    criterion(1, ok, detail)
    assert J["SQL"] <= J["RQL"], detail
    assert J["RQL"] <= J["MPC"], detail
    assert J["SQL"] <= 0.95 * J["MPC"], detail
    assert elapsed <= 300


def test_c02_mpc_horizon_effect(short_horizon, long_horizon, criterion):
    short, t_short = short_horizon
    long_, t_long = long_horizon
    pairs = []
    for p in range(3):
        pairs.append((long_.cell("MPC", 12, p).cost_mean, short.cell("MPC", 2, p).cost_mean))
    ok = all(a <= b for a, b in pairs)
    detail = "MPC N=12 vs N=2 per start: " + "; ".join(f"{a:.1f} <= {b:.1f}" for a, b in pairs)
    criterion(2, ok, detail)
    assert ok, detail
    assert t_short <= 300 and t_long <= 300


def test_c03_long_horizon_stabilization(long_horizon, criterion):
    rep, _ = long_horizon
    misses = []
    for ep in rep.logs:
        if not ep.reached or ep.time_to_goal > 30.0:
            d = math.hypot(ep.final_pose.x, ep.final_pose.y) if ep.final_pose else math.nan
            misses.append(f"{ep.method} start {ep.start_index} (final distance {d:.3f} m)")
    ttg = ", ".join(f"{e.method}{e.start_index}:{e.time_to_goal:.1f}s" for e in rep.logs)
    detail = f"{len(rep.logs) - len(misses)}/{len(rep.logs)} episodes reach 0.05 m / 0.1 rad [{ttg}]"
    criterion(3, not misses, detail)
    assert not misses, "; ".join(misses)


def test_c04_stacked_q_identity(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        mdp = random_mdp(rng, n_states=5, n_actions=3, gamma=0.9)
        _, Q = value_iteration(mdp)
        policy, _ = policy_iteration(mdp)
        horizon = int(rng.integers(1, 8))
        xs, us = greedy_trajectory(mdp, Q, int(rng.integers(5)), horizon)
        diff = abs(stacked_q(mdp, policy, xs, us) - sum(Q[x, u] for x, u in zip(xs, us)))
        worst = max(worst, diff)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed <= 30
    criterion(4, ok, f"max |stacked - sum Q| = {worst:.2e} over 100 MDPs ({elapsed:.1f} s)")
    assert ok


def _normal_equations(buf, w_prev):
    rows, rhs = [], []
    for t in buf:
        chi = np.r_[t.state, t.action]
        chi2 = np.r_[t.next_state, t.next_action]
        rows.append(np.outer(chi, chi)[np.triu_indices(5)])
        rhs.append(t.cost + np.outer(chi2, chi2)[np.triu_indices(5)] @ w_prev)
    A, b = np.array(rows), np.array(rhs)
    w = np.linalg.solve(A.T @ A, A.T @ b)
    r = A @ w - b
    return 0.5 * float(r @ r)


def test_c05_critic_least_squares_oracle(criterion):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        buf = ReplayBuffer(20)
        for _ in range(20):
            buf.push(Transition(rng.normal(size=3), rng.normal(size=2), rng.uniform(0, 5), rng.normal(size=3), rng.normal(size=2)))
        w_prev = rng.normal(size=15)
        got = update_critic(buf, w_prev).loss
        want = _normal_equations(buf, w_prev)
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed <= 10
    criterion(5, ok, f"max relative loss gap {worst:.2e} over 50 buffers ({elapsed:.2f} s)")
    assert ok


def test_c06_critic_recovery(criterion):
    rng = np.random.default_rng(6)
    w_true = rng.normal(size=15)
    M = rng.normal(size=(5, 5))
    M *= 0.8 / np.linalg.norm(M, 2)
    buf = ReplayBuffer(20)
    for _ in range(20):
        chi = rng.normal(size=5)
        chi2 = M @ chi
        c = q_value(w_true, chi[:3], chi[3:]) - q_value(w_true, chi2[:3], chi2[3:])
        buf.push(Transition(chi[:3], chi[3:], c, chi2[:3], chi2[3:]))
    w = np.zeros(15)
    for it in range(1, 51):
        w = update_critic(buf, w).weights
        resid = max(abs(td_error(w, w, t)) for t in buf)
        if resid <= 1e-6:
            break
    ok = resid <= 1e-6
    criterion(6, ok, f"max TD residual {resid:.2e} after {it} iterations, |w - w_true| = {np.max(np.abs(w - w_true)):.1e}")
    assert ok


def test_c07_objective_identities(criterion):
    rng = np.random.default_rng(7)
    worst_a = worst_b = 0.0
    for _ in range(1000):
        s = rng.uniform(-2, 2, 3)
        w = rng.normal(size=15)
        u1 = rng.uniform(-1, 1, 2) * [0.22, 2.48]
        a = sql_objective(s, u1, w, ControllerSpec(method="SQL", horizon=1))
        b = rql_objective(s, u1, w, ControllerSpec(method="RQL", horizon=1))
        worst_a = max(worst_a, abs(a - b))
        n = int(rng.integers(2, 13))
        seq = rng.uniform(-1, 1, (n, 2)) * [0.22, 2.48]
        r = rql_objective(s, seq, np.zeros(15), ControllerSpec(method="RQL", horizon=n))
        m = mpc_objective(s, seq[:-1], ControllerSpec(horizon=n - 1, gamma=1.0))
        worst_b = max(worst_b, abs(r - m) / max(1.0, abs(m)))
    ok = worst_a <= 1e-12 and worst_b <= 1e-12
    criterion(7, ok, f"SQL(N=1) vs RQL(N=1) max {worst_a:.1e}; RQL(w=0) vs MPC(N-1) max {worst_b:.1e}")
    assert ok


def test_c08_optimizer_vs_grid(criterion):
    rng = np.random.default_rng(8)
    spec = ControllerSpec(horizon=1)
    vs = np.linspace(-spec.v_max, spec.v_max, 41)
    ws = np.linspace(-spec.omega_max, spec.omega_max, 41)
    worst = -math.inf
    for _ in range(20):
        s = rng.uniform(-1, 1, 3) * [1, 1, math.pi]
        a = Controller(spec).compute_action(s)
        grid = min(mpc_objective(s, [v, w], spec) for v in vs for w in ws)
        worst = max(worst, mpc_objective(s, a, spec) - grid)
    ok = worst <= 1e-3
    criterion(8, ok, f"max (optimizer - grid) objective gap {worst:.2e} over 20 states")
    assert ok


def test_c09_integrator_order(criterion):
    rng = np.random.default_rng(9)
    S = rng.uniform(-1, 1, (300, 3)) * [2, 2, math.pi]
    A = rng.uniform(-1, 1, (300, 2)) * [0.22, 2.48]

    def max_err(d):
        return max(float(np.max(np.abs(euler_step(s, a, d) - rk4_fine(s, a, d, 50)))) for s, a in zip(S, A))

    e1, e2 = max_err(0.1), max_err(0.05)
    ok = e1 / e2 >= 3
    criterion(9, ok, f"max error {e1:.2e} at 0.1 s, {e2:.2e} at 0.05 s, ratio {e1 / e2:.2f}")
    assert ok


def test_c10_determinism_and_round_trip(tmp_path, criterion):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nhorizons = 2\nrepetitions = 2\nduration = 3\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    names = sorted(p.relative_to(a) for p in a.rglob("*.csv"))
    same_csv = names == sorted(p.relative_to(b) for p in b.rglob("*.csv")) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names
    )
    original = (a / "report.json").read_bytes()
    assert cli.main(["report", "--dir", str(a)]) == 0
    same_report = (a / "report.json").read_bytes() == original
    ok = same_csv and same_report and len(names) > 0
    criterion(10, ok, f"{len(names)} CSVs byte-identical across runs: {same_csv}; report round trip exact: {same_report}")
    assert ok
