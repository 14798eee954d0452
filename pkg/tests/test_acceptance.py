"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines
as they complete.  The directional benchmark (criterion 9) trains six agents
at desk scale and dominates the runtime; everything else finishes in seconds.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from scipy import stats

from navslam import nn
from navslam.config import effective_config
from navslam.ddpg import (CriticNet, OuNoise, ReplayBuffer, action_head,
                          action_head_grad, make_actor)
from navslam.render import reward_surface
from navslam.reward import (RewardParams, StepOutcome, dense_reward,
                            map_term_from_distances, shaped_reward_from_distances)
from navslam.robot import (OdomNoiseParams, OdometryReading, RobotState,
                           odometry_between, step as robot_step)
from navslam.slam_grid import OccupancyGrid, integrate_scan
from navslam.trainer import SlamRunner, SlamSettings, run_benchmark, train
from navslam.world import World, collides, is_free_origin, resolve_world, scan
from oracles import lattice_scan_poses, mapping_agreement
from test_nn import finite_difference_grads, max_relative_error, reference_adam_trace

WORKERS = max(1, min(4, os.cpu_count() or 1))


def criterion(n: int, desc: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {desc}"
          + (f" [{detail}]" if detail else ""))
    assert ok, f"criterion {n} failed: {desc} {detail}"


# ---------------------------------------------------------------- criterion 1

def test_01_gradient_correctness():
    t0 = time.time()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        # actor with the sigmoid/tanh split head
        actor = make_actor(10, (8, 8, 8), rng)
        s = rng.normal(size=10)
        c = rng.normal(size=2)

        def actor_objective() -> float:
            z, _ = nn.forward(actor, s)
            return float(np.dot(c, action_head(z)))

        z, cache = nn.forward(actor, s)
        analytic, _ = nn.backward(actor, cache, c * action_head_grad(z))
        numeric = finite_difference_grads(actor_objective, actor.params())
        worst = max(worst, max_relative_error(analytic, numeric))

        # critic with late action insertion
        critic = CriticNet.create(10, 2, (8, 8, 8), rng)
        a = rng.normal(size=2)

        def critic_objective() -> float:
            q, _ = critic.forward(s, a)
            return q

        _, ccache = critic.forward(s, a)
        cgrads, _, ga = critic.backward(ccache, 1.0)
        numeric = finite_difference_grads(critic_objective, critic.params())
        worst = max(worst, max_relative_error(cgrads, numeric))
        numeric_a = finite_difference_grads(critic_objective, [a])[0]
        worst = max(worst, max_relative_error([ga], [numeric_a]))
    elapsed = time.time() - t0
    criterion(1, "actor/critic gradients match finite differences",
              worst < 1e-4 and elapsed < 10.0,
              f"max rel err {worst:.2e}, {elapsed:.1f}s over 5 seeds")


# ---------------------------------------------------------------- criterion 2

def test_02_adam_and_polyak_oracle_equivalence():
    rng = np.random.default_rng(21)
    params = [rng.normal(size=(8, 5)), rng.normal(size=8), rng.normal(size=(3, 8))]
    grad_seq = [[rng.normal(size=p.shape) for p in params] for _ in range(100)]
    expected = reference_adam_trace(params, grad_seq, lr=1e-3, l2=1e-2)
    state = nn.AdamState.for_params(params, lr=1e-3, l2=1e-2)
    for grads in grad_seq:
        nn.adam_step(params, grads, state)
    adam_dev = max(float(np.max(np.abs(p - e))) for p, e in zip(params, expected))

    online = make_actor(6, (5, 5, 5), np.random.default_rng(1))
    target = make_actor(6, (5, 5, 5), np.random.default_rng(2))
    before = [p.copy() for p in target.params()]
    nn.polyak_update(target, online, 0.001)
    polyak_dev = max(float(np.max(np.abs(t - (0.001 * o + 0.999 * b))))
                     for t, o, b in zip(target.params(), online.params(), before))
    criterion(2, "Adam matches an independent reference; Polyak blend exact",
              adam_dev < 1e-10 and polyak_dev == 0.0,
              f"adam dev {adam_dev:.2e}, polyak dev {polyak_dev:.2e}")


# ---------------------------------------------------------------- criterion 3

def test_03_mapping_correctness():
    t0 = time.time()
    room = World(bounds=(3.0, 3.0), obstacles=[], name="box-room")
    grid = OccupancyGrid.for_world(room, resolution=0.05)
    poses = lattice_scan_poses(room, 5, 5, 8)
    assert len(poses) == 200
    for pose in poses:
        integrate_scan(grid, pose, scan(room, pose))
    agreement, n_observed = mapping_agreement(grid, room)
    elapsed = time.time() - t0
    criterion(3, "200 noiseless scans classify >=95% of observed cells correctly",
              agreement >= 0.95 and elapsed < 30.0,
              f"agreement {100 * agreement:.1f}% over {n_observed} cells, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 4

def test_04_particle_filter_tracking():
    t0 = time.time()
    box = np.array([[1.2, 1.2], [1.8, 1.2], [1.8, 1.8], [1.2, 1.8]])
    world = World(bounds=(3.0, 3.0), obstacles=[box], name="pf-room")
    cfg = effective_config(preset="desk")
    slam = SlamRunner(world, SlamSettings.from_config(cfg))
    for pose in lattice_scan_poses(world, 5, 5, 8):
        if is_free_origin(world, pose[0], pose[1]):
            integrate_scan(slam.grid, pose, scan(world, pose))

    rng = np.random.default_rng(4)
    state = RobotState(0.5, 0.5, 0.4)
    slam.reset_episode(state.pose)
    noise = OdomNoiseParams()  # default odometry noise
    errors = []
    prev = None
    for i in range(500):
        lidar = scan(world, state.pose)
        odom = OdometryReading(0.0, 0.0, 0.0) if prev is None \
            else odometry_between(prev, state, noise, rng)
        slam.step(odom, lidar, rng)
        errors.append(math.hypot(slam.pose[0] - state.x, slam.pose[1] - state.y))
        front = lidar.ranges[15:25].min()
        v, w = (0.0, 1.0) if front < 0.45 else (0.2, 0.2 * math.sin(i * 0.05))
        prev = state
        state = robot_step(state, (v, w), 0.1)
        assert not collides(world, (state.x, state.y), 0.12)
    elapsed = time.time() - t0
    median = float(np.median(errors))
    criterion(4, "30-particle filter tracks a 500-step wander on a converged map",
              median < 0.15 and slam.resample_count >= 1 and elapsed < 60.0,
              f"median err {median:.3f} m, {slam.resample_count} resamples, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 5

def test_05_reward_properties():
    params = RewardParams()
    ds = np.linspace(0.0, 6.0, 400)
    running = [dense_reward(d, StepOutcome.RUNNING, params) for d in ds]
    strictly_decreasing = all(b < a for a, b in zip(running, running[1:]))

    rng = np.random.default_rng(5)
    shaped_le_dense = True
    for _ in range(500):
        d = float(rng.uniform(0, 5))
        dists = rng.uniform(0, 2, size=int(rng.integers(0, 8)))
        conf = float(rng.uniform(0, 1))
        s = shaped_reward_from_distances(d, StepOutcome.RUNNING, dists, conf, params)
        shaped_le_dense &= s <= dense_reward(d, StepOutcome.RUNNING, params)

    want = 0.8 * (math.exp(-0.5) + math.exp(-1.0)) / 2.0  # the 0.38973... case
    got = map_term_from_distances(np.array([0.5, 1.0]), 0.8)
    hand_value_ok = abs(got - want) < 1e-9

    terminal_ok = True
    for outcome in (StepOutcome.REACHED, StepOutcome.CRASHED, StepOutcome.TIMED_OUT):
        a = shaped_reward_from_distances(1.0, outcome, np.array([0.2]), 1.0, params)
        terminal_ok &= a == dense_reward(1.0, outcome, params)

    criterion(5, "reward monotonicity, shaped<=dense, hand values, terminal invariance",
              strictly_decreasing and shaped_le_dense and hand_value_ok and terminal_ok,
              f"map-term case {got:.6f} vs {want:.6f}")


# ---------------------------------------------------------------- criterion 6

def test_06_ou_noise_stationary_std():
    noise = OuNoise(theta=0.15, sigma=0.2)
    rng = np.random.default_rng(6)
    n = 1_000_000
    burn = 10_000
    samples = np.empty(n)
    for i in range(burn):
        noise.sample(rng)
    for i in range(n):
        samples[i] = noise.sample(rng)[0]
    want = 0.2 / math.sqrt(2 * 0.15)
    got = float(np.std(samples))
    rel = abs(got - want) / want
    criterion(6, "empirical OU stationary std within 5% of sigma/sqrt(2*theta)",
              rel < 0.05, f"measured {got:.4f} vs {want:.4f} ({100 * rel:.2f}%)")


# ---------------------------------------------------------------- criterion 7

def test_07_replay_buffer_contract():
    buf = ReplayBuffer(capacity=100_000, state_dim=1, action_dim=1)
    for i in range(100_001):
        buf.push(np.array([float(i)]), (0.0,), 0.0, np.array([0.0]), False)
    fifo_ok = len(buf) == 100_000 and buf.states[0, 0] == 100_000.0 \
        and buf.states[1, 0] == 1.0  # slot 0 overwritten by item 100000, item 0 evicted

    small = ReplayBuffer(capacity=1000, state_dim=1, action_dim=1)
    for i in range(1000):
        small.push(np.array([float(i)]), (0.0,), 0.0, np.array([0.0]), False)
    rng = np.random.default_rng(7)
    counts = np.zeros(1000)
    for _ in range(1000):
        ids = small.sample(100, rng)[0][:, 0].astype(int)
        counts += np.bincount(ids, minlength=1000)
    n_draws = 100_000
    expected = n_draws / 1000
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    threshold = float(stats.chi2.ppf(0.99, df=999))
    criterion(7, "FIFO eviction at 100000 and uniform sampling (chi^2 at 1%)",
              fifo_ok and chi2 < threshold,
              f"chi2 {chi2:.1f} < {threshold:.1f} on {n_draws} draws")


# ---------------------------------------------------------------- criterion 8

def _determinism_run(out_dir: str) -> str:
    cfg = effective_config(preset="desk")
    cfg["seed"] = 7
    report = train(cfg, world=resolve_world("desk-train"), out_dir=out_dir)
    return str(report.out_dir)


def test_08_training_determinism(tmp_path):
    dirs = [str(tmp_path / "run_a"), str(tmp_path / "run_b")]
    if WORKERS > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            list(pool.map(_determinism_run, dirs))
    else:
        for d in dirs:
            _determinism_run(d)
    ckpt_equal = (tmp_path / "run_a" / "final.ckpt").read_bytes() \
        == (tmp_path / "run_b" / "final.ckpt").read_bytes()
    log_equal = (tmp_path / "run_a" / "episodes.ndjson").read_bytes() \
        == (tmp_path / "run_b" / "episodes.ndjson").read_bytes()
    criterion(8, "two seed-7 desk training runs are bitwise identical",
              ckpt_equal and log_equal,
              f"checkpoint equal: {ckpt_equal}, episode log equal: {log_equal}")


# ---------------------------------------------------------------- criterion 9

def test_09_directional_benchmark(tmp_path):
    t0 = time.time()
    cfg = effective_config(preset="desk")
    result = run_benchmark(cfg, seeds=[7, 11, 23], train_world="desk-train",
                           unseen_world="desk-unseen", out_dir=tmp_path / "bench",
                           n_targets=100, workers=WORKERS)
    elapsed = time.time() - t0
    for row in result["rows"]:
        for wk in ("train_world", "unseen_world"):
            for mode in ("dense", "shaped"):
                e = row["eval"][wk][mode]
                mean = "n/a" if e["actions_mean"] is None else f"{e['actions_mean']:.1f}"
                print(f"  seed {row['seed']:>2} {wk:12s} {mode:6s} "
                      f"success {100 * e['success_ratio']:3.0f}%  actions {mean}")
    verdict = result["verdict"]
    for p in verdict["per_seed"]:
        print(f"  seed {p['seed']:>2} checks: " + ", ".join(
            f"{k}={'ok' if v else 'FAIL'}" for k, v in p["checks"].items()))
    criterion(9, "map-shaped agent beats the dense baseline at desk scale "
                 "(seed majority)",
              verdict["majority_pass"] and elapsed <= 45 * 60,
              f"{verdict['seeds_passing']}/3 seeds pass, {elapsed / 60:.1f} min")


# --------------------------------------------------------------- criterion 10

def test_10_reward_surface_deepens_with_confidence():
    world = resolve_world("desk-train")
    grid = OccupancyGrid.for_world(world, resolution=0.05)
    for pose in lattice_scan_poses(world, 5, 5, 8):
        if is_free_origin(world, pose[0], pose[1]):
            integrate_scan(grid, pose, scan(world, pose))
    params = RewardParams()
    goal = (2.6, 0.5)
    xs, ys, full = reward_surface(world, grid, goal, params, confidence=1.0, step=0.1)
    _, _, half = reward_surface(world, grid, goal, params, confidence=0.5, step=0.1)

    # sample points near mapped obstacle cells, where the map term is active
    occ_rows, occ_cols = np.nonzero(grid.occupied_mask())
    occ_x = (occ_cols + 0.5) * grid.resolution
    occ_y = (occ_rows + 0.5) * grid.resolution
    checked = 0
    strictly_deeper = True
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            near = np.min(np.hypot(occ_x - x, occ_y - y)) < 0.5
            if near and full[iy, ix] != half[iy, ix]:
                checked += 1
                strictly_deeper &= full[iy, ix] < half[iy, ix]
    criterion(10, "reward surface strictly deeper at obstacles when confidence rises",
              checked >= 100 and strictly_deeper,
              f"{checked} sample points near obstacles, all strictly deeper: "
              f"{strictly_deeper}")
