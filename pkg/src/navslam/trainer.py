"""Episode orchestration: the sense / SLAM / reward / act / learn loop.

Training is strictly sequential so a fixed seed reproduces a run bit for
bit.  Evaluation freezes the policy, drops SLAM entirely (the planner runs
map-less on dead-reckoned odometry), and may fan episodes out to worker
processes; per-episode RNG streams are derived from (master seed, episode
index) so the report does not depend on the worker count.
"""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import validate_config
from .ddpg import DdpgAgent, ReplayBuffer, state_from_scan
from .reward import RewardParams, StepOutcome, dense_reward, map_term_from_distances
from .robot import (OdomNoiseParams, OdometryReading, RobotState, apply_odometry,
                    normalize_angle, odometry_between, step as robot_step)
from .slam_grid import (OccupancyGrid, cells_in_fov, integrate_scan,
                        map_posterior_confidence, occupied_fov_distances, save_grid,
                        should_publish)
from .slam_pf import (ParticleSet, effective_sample_size, estimate_pose, predict,
                      resample_if_needed, update_weights)
from .storage import atomic_write_text
from .world import World, collides, collides_batch, is_free_origin, resolve_world, scan

EPISODE_LOG_SCHEMA = 1


# ------------------------------------------------------------- configuration

@dataclass
class SlamSettings:
    num_particles: int = 30
    neff_fraction: float = 0.5
    sigma_hit: float = 0.1
    floor: float = 0.05
    odom_noise: OdomNoiseParams = OdomNoiseParams()
    resolution: float = 0.05
    l_occ: float = 0.85
    l_free: float = -0.4
    l_max: float = 10.0
    occupied_threshold: float = 0.65
    publish_threshold: float = 0.25
    confidence_mode: str = "geometric"

    @classmethod
    def from_config(cls, cfg: dict) -> "SlamSettings":
        pf, grid, odom = cfg["pf"], cfg["grid"], cfg["odom"]
        return cls(
            num_particles=pf["num_particles"], neff_fraction=pf["neff_fraction"],
            sigma_hit=pf["sigma_hit"], floor=pf["floor"],
            odom_noise=OdomNoiseParams(odom["alpha1"], odom["alpha2"],
                                       odom["alpha3"], odom["alpha4"]),
            resolution=grid["resolution"], l_occ=grid["l_occ"], l_free=grid["l_free"],
            l_max=grid["l_max"], occupied_threshold=grid["occupied_threshold"],
            publish_threshold=grid["publish_threshold"],
            confidence_mode=cfg["confidence"]["mode"])


@dataclass
class EpisodeSettings:
    max_steps: int
    dt: float
    d_min: float
    reward_mode: str
    reward_params: RewardParams
    robot_radius: float
    lidar_noise_sigma: float
    odom_noise: OdomNoiseParams
    fov_range: float
    warmup: int
    timeout_bootstrap: bool
    reset_map_per_episode: bool = False

    @classmethod
    def from_config(cls, cfg: dict, *, evaluation: bool) -> "EpisodeSettings":
        rw, odom = cfg["reward"], cfg["odom"]
        max_steps = cfg["eval"]["max_steps"] if evaluation else cfg["train"]["max_steps"]
        return cls(
            max_steps=max_steps, dt=cfg["robot"]["dt"], d_min=rw["d_min"],
            reward_mode="dense" if evaluation else rw["mode"],
            reward_params=RewardParams(r_reached=rw["r_reached"], r_crashed=rw["r_crashed"],
                                       decay_rate=rw["decay_rate"], d_min=rw["d_min"],
                                       max_steps=max_steps),
            robot_radius=cfg["world"]["robot_radius"],
            lidar_noise_sigma=cfg["world"]["lidar_noise_sigma"],
            odom_noise=OdomNoiseParams(odom["alpha1"], odom["alpha2"],
                                       odom["alpha3"], odom["alpha4"]),
            fov_range=rw["fov_range"], warmup=cfg["ddpg"]["warmup"],
            timeout_bootstrap=cfg["ddpg"]["timeout_bootstrap"],
            reset_map_per_episode=cfg["train"]["reset_map_per_episode"])


def agent_from_config(cfg: dict, rng: np.random.Generator) -> DdpgAgent:
    d = cfg["ddpg"]
    return DdpgAgent.create(
        rng, hidden=tuple(cfg["nn"]["hidden"]),
        gamma=d["gamma"], tau=d["tau"], lr_actor=d["lr_actor"], lr_critic=d["lr_critic"],
        l2_critic=d["l2_critic"], l2_decoupled=cfg["nn"]["l2_decoupled"],
        batch_size=d["batch_size"], ou_theta=d["ou_theta"], ou_sigma=d["ou_sigma"])


# --------------------------------------------------------------- SLAM runner

class SlamRunner:
    """Couples the particle filter with the shared occupancy grid.

    One runner persists across a training run: the map keeps improving from
    episode to episode while the particle set restarts at each known start
    pose.  Map snapshots for the reward are only republished when the global
    map confidence moves by the publish threshold.
    """

    def __init__(self, world: World, settings: SlamSettings):
        self.settings = settings
        self.grid = OccupancyGrid.for_world(
            world, settings.resolution, l_occ=settings.l_occ, l_free=settings.l_free,
            l_max=settings.l_max, occupied_threshold=settings.occupied_threshold)
        self.pset: ParticleSet | None = None
        self.pose: tuple[float, float, float] | None = None
        self.snapshot = self.grid.copy()
        self.last_published_confidence = self.global_confidence()
        self.resample_count = 0
        self.degenerate_count = 0
        self.skipped_map_updates = 0

    def global_confidence(self) -> float:
        return map_posterior_confidence(self.grid, None, self.settings.confidence_mode)

    def reset_episode(self, start_pose: tuple[float, float, float], *,
                      reset_map: bool = False) -> None:
        self.pset = ParticleSet.at_pose(start_pose, self.settings.num_particles)
        self.pose = start_pose
        if reset_map:
            self.grid.log_odds[:] = 0.0
            self.grid.observed[:] = False
            self.grid.update_counter = 0
            self.grid._dist_dirty = True
            self.snapshot = self.grid.copy()
            self.last_published_confidence = self.global_confidence()

    def step(self, odom: OdometryReading, lidar, rng: np.random.Generator) -> None:
        s = self.settings
        self.pset = predict(self.pset, odom, s.odom_noise, rng)
        self.pset = update_weights(self.pset, lidar, self.grid,
                                   sigma_hit=s.sigma_hit, floor=s.floor)
        if self.pset.degenerate:
            self.degenerate_count += 1
        self.pose = estimate_pose(self.pset)
        if effective_sample_size(self.pset) < s.neff_fraction * len(self.pset):
            self.resample_count += 1
        self.pset = resample_if_needed(self.pset, s.neff_fraction, rng)
        if self.grid.contains(self.pose[0], self.pose[1]):
            integrate_scan(self.grid, self.pose, lidar)
        else:
            self.skipped_map_updates += 1
        conf = self.global_confidence()
        if should_publish(self.last_published_confidence, conf, s.publish_threshold):
            self.snapshot = self.grid.copy()
            self.last_published_confidence = conf

    def reward_view(self, pose: tuple[float, float, float],
                    fov_range: float) -> tuple[np.ndarray, float]:
        """Occupied-cell distances and FOV confidence from the published snapshot."""
        _, _, dists = occupied_fov_distances(self.snapshot, pose, fov_range)
        rows, cols = cells_in_fov(self.snapshot, pose, range_m=fov_range)
        if len(rows) == 0:
            return dists, 0.5
        conf = map_posterior_confidence(self.snapshot, (rows, cols),
                                        self.settings.confidence_mode)
        return dists, min(conf, 1.0)


# ---------------------------------------------------------- episode sampling

def _free_space_index(world: World, resolution: float, robot_radius: float):
    """Collision-free cell centers plus 8-connected component labels, cached."""
    cache = getattr(world, "_free_space_cache", None)
    if cache is None:
        cache = {}
        world._free_space_cache = cache
    key = (round(resolution, 9), round(robot_radius, 9))
    if key in cache:
        return cache[key]
    w, h = world.bounds
    nx = int(math.ceil(w / resolution - 1e-9))
    ny = int(math.ceil(h / resolution - 1e-9))
    xs = (np.arange(nx) + 0.5) * resolution
    ys = (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    free = ~collides_batch(world, pts, robot_radius)
    labels_grid, _ = ndimage.label(free.reshape(ny, nx), structure=np.ones((3, 3)))
    centers = pts[free]
    labels = labels_grid.ravel()[free]
    cache[key] = (centers, labels)
    return centers, labels


def sample_episode_setup(world: World, rng: np.random.Generator, *,
                         robot_radius: float = 0.15, resolution: float = 0.05,
                         max_tries: int = 1000) -> tuple[RobotState, tuple[float, float]]:
    """Uniform start pose and goal over collision-free cells with a connectivity check.

    Start/goal pairs in different free-space components are rejected, so a
    collision-free path always exists between the two.
    """
    centers, labels = _free_space_index(world, resolution, robot_radius)
    if len(centers) == 0:
        raise RuntimeError(f"world {world.name!r} has no free space at radius {robot_radius}")
    for _ in range(max_tries):
        i = int(rng.integers(len(centers)))
        j = int(rng.integers(len(centers)))
        if labels[i] != labels[j]:
            continue
        heading = normalize_angle(float(rng.uniform(-math.pi, math.pi)))
        start = RobotState(x=float(centers[i, 0]), y=float(centers[i, 1]), heading=heading)
        return start, (float(centers[j, 0]), float(centers[j, 1]))
    raise RuntimeError("no connected start/goal pair found within the retry budget")


# ------------------------------------------------------------------ episodes

@dataclass
class EpisodeRecord:
    outcome: StepOutcome
    steps: int
    start: tuple[float, float, float]
    goal: tuple[float, float]
    trajectory: list[tuple[float, float, float]]
    actions: list[tuple[float, float]]
    dense_rewards: list[float]
    map_terms: list[float]
    rewards: list[float]
    slam_error: float | None = None

    @property
    def success(self) -> bool:
        return self.outcome is StepOutcome.REACHED

    @property
    def reward_total(self) -> float:
        return float(sum(self.rewards))


def run_episode(world: World, agent: DdpgAgent, slam: SlamRunner | None,
                setup: tuple[RobotState, tuple[float, float]], st: EpisodeSettings,
                rng: np.random.Generator, *, learn: bool = False,
                buffer: ReplayBuffer | None = None) -> EpisodeRecord:
    """Run one episode of the sense / SLAM / act / reward loop.

    With a SLAM runner the agent's goal coordinates come from the particle
    filter estimate; without one they come from dead-reckoned odometry.
    Outcomes are always judged against ground truth.
    """
    if learn and buffer is None:
        raise ValueError("learning requires a replay buffer")
    start, goal = setup
    diag = world.diagonal
    true_state = start
    dead_pose = start.pose
    last_action = (0.0, 0.0)
    if slam is not None:
        slam.reset_episode(start.pose, reset_map=st.reset_map_per_episode)
    if learn:
        agent.noise.reset()

    def sense(prev: RobotState | None, curr: RobotState):
        nonlocal dead_pose
        lidar = scan(world, curr.pose, noise_sigma=st.lidar_noise_sigma,
                     rng=rng if st.lidar_noise_sigma > 0 else None)
        reading = OdometryReading(0.0, 0.0, 0.0) if prev is None \
            else odometry_between(prev, curr, st.odom_noise, rng)
        if slam is not None:
            slam.step(reading, lidar, rng)
            pose_est = slam.pose
        else:
            if prev is not None:
                dead_pose = apply_odometry(dead_pose, reading)
            pose_est = dead_pose
        dxg, dyg = goal[0] - pose_est[0], goal[1] - pose_est[1]
        sv = state_from_scan(lidar.ranges, math.hypot(dxg, dyg),
                             normalize_angle(math.atan2(dyg, dxg) - pose_est[2]),
                             last_action)
        return sv.as_array(diag), pose_est

    s, pose_est = sense(None, true_state)
    trajectory = [true_state.pose]
    actions: list[tuple[float, float]] = []
    dense_list: list[float] = []
    map_list: list[float] = []
    total_list: list[float] = []
    outcome = StepOutcome.RUNNING
    steps = 0

    for step_i in range(1, st.max_steps + 1):
        action = agent.act(s, explore=learn, rng=rng)
        prev_state = true_state
        true_state = robot_step(true_state, (action.v, action.omega), st.dt)
        last_action = (action.v, action.omega)
        trajectory.append(true_state.pose)
        actions.append(last_action)
        steps = step_i

        d_true = math.hypot(goal[0] - true_state.x, goal[1] - true_state.y)
        if d_true <= st.d_min:
            outcome = StepOutcome.REACHED
        elif collides(world, (true_state.x, true_state.y), st.robot_radius):
            outcome = StepOutcome.CRASHED
        elif step_i == st.max_steps:
            outcome = StepOutcome.TIMED_OUT
        else:
            outcome = StepOutcome.RUNNING

        if outcome is StepOutcome.CRASHED and not is_free_origin(world, true_state.x,
                                                                 true_state.y):
            s2 = s  # scan impossible from inside an obstacle; terminal anyway
        else:
            s2, pose_est = sense(prev_state, true_state)

        m = 0.0
        if st.reward_mode == "shaped" and slam is not None:
            dists, conf = slam.reward_view(pose_est, st.fov_range)
            m = map_term_from_distances(dists, conf)
        dense = dense_reward(d_true, outcome, st.reward_params)
        total = dense if outcome.terminal else dense - m
        dense_list.append(dense)
        map_list.append(m)
        total_list.append(total)

        if learn:
            terminal_flag = outcome in (StepOutcome.REACHED, StepOutcome.CRASHED) \
                or (outcome is StepOutcome.TIMED_OUT and not st.timeout_bootstrap)
            buffer.push(s, (action.v, action.omega), total, s2, terminal_flag)
            if len(buffer) >= max(st.warmup, agent.batch_size):
                agent.update_step(buffer, rng)

        s = s2
        if outcome.terminal:
            break

    slam_error = None
    if slam is not None:
        slam_error = math.hypot(pose_est[0] - true_state.x, pose_est[1] - true_state.y)
    return EpisodeRecord(outcome=outcome, steps=steps, start=start.pose, goal=goal,
                         trajectory=trajectory, actions=actions,
                         dense_rewards=dense_list, map_terms=map_list,
                         rewards=total_list, slam_error=slam_error)


# ------------------------------------------------------------------ training

@dataclass
class TrainReport:
    episodes: list[dict]
    success_ratio: float
    collision_ratio: float
    convergence_steps: int | None
    checkpoint_path: Path | None
    out_dir: Path | None


def _episode_log_line(index: int, rec: EpisodeRecord, success_ratio: float,
                      collision_ratio: float, include_trajectory: bool) -> str:
    entry = {
        "schema": EPISODE_LOG_SCHEMA,
        "episode": index,
        "outcome": rec.outcome.value,
        "steps": rec.steps,
        "start": [float(v) for v in rec.start],
        "goal": [float(v) for v in rec.goal],
        "reward_total": rec.reward_total,
        "reward_dense": [float(v) for v in rec.dense_rewards],
        "reward_map": [float(v) for v in rec.map_terms],
        "reward": [float(v) for v in rec.rewards],
        "slam_error": None if rec.slam_error is None else float(rec.slam_error),
        "success_ratio": success_ratio,
        "collision_ratio": collision_ratio,
    }
    if include_trajectory:
        entry["trajectory"] = [[float(v) for v in p] for p in rec.trajectory]
    return json.dumps(entry, separators=(",", ":"))


def _convergence_steps(outcomes: list[StepOutcome], steps: list[int],
                       window: int, target: float = 0.8) -> int | None:
    """Total env steps until the rolling success ratio first reaches the target
    and stays there for the rest of training; None if that never happens."""
    n = len(outcomes)
    ok = np.zeros(n, dtype=float)
    for i, o in enumerate(outcomes):
        ok[i] = 1.0 if o is StepOutcome.REACHED else 0.0
    sustained_from = None
    for i in range(n - 1, -1, -1):
        lo = max(0, i - window + 1)
        if np.mean(ok[lo : i + 1]) >= target:
            sustained_from = i
        else:
            break
    if sustained_from is None:
        return None
    return int(np.sum(steps[: sustained_from + 1]))


def train(cfg: dict, *, world: World | None = None,
          out_dir: str | Path | None = None) -> TrainReport:
    """Train one agent per the configuration; fully deterministic under a fixed seed."""
    validate_config(cfg)
    if world is None:
        if not cfg["world"]["path"]:
            raise ValueError("train needs a world: set world.path or pass world=")
        world = resolve_world(cfg["world"]["path"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    agent = agent_from_config(cfg, rng)
    buffer = ReplayBuffer(capacity=cfg["ddpg"]["buffer_capacity"])
    slam = SlamRunner(world, SlamSettings.from_config(cfg))
    st = EpisodeSettings.from_config(cfg, evaluation=False)
    episodes = cfg["train"]["episodes"]
    window = deque(maxlen=cfg["train"]["window"])

    out = Path(out_dir) if out_dir is not None else None
    log_lines: list[str] = []
    summaries: list[dict] = []
    outcomes: list[StepOutcome] = []
    step_counts: list[int] = []

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        from .config import dump_config

        dump_config(cfg, out / "effective_config.yaml")

    for ep in range(episodes):
        setup = sample_episode_setup(world, rng, robot_radius=st.robot_radius,
                                     resolution=cfg["grid"]["resolution"])
        rec = run_episode(world, agent, slam, setup, st, rng, learn=True, buffer=buffer)
        agent.noise.sigma *= cfg["ddpg"]["ou_sigma_decay"]
        window.append(rec.outcome)
        success_ratio = sum(o is StepOutcome.REACHED for o in window) / len(window)
        collision_ratio = sum(o is StepOutcome.CRASHED for o in window) / len(window)
        outcomes.append(rec.outcome)
        step_counts.append(rec.steps)
        summaries.append({
            "episode": ep, "outcome": rec.outcome.value, "steps": rec.steps,
            "reward_total": rec.reward_total, "slam_error": rec.slam_error,
            "success_ratio": success_ratio, "collision_ratio": collision_ratio,
        })
        log_lines.append(_episode_log_line(ep, rec, success_ratio, collision_ratio,
                                           cfg["train"]["log_trajectories"]))
        if out is not None and (ep + 1) % cfg["train"]["checkpoint_every"] == 0:
            agent.save_checkpoint(out / "checkpoints" / f"ep{ep + 1:05d}.ckpt",
                                  episode=ep + 1, label=st.reward_mode,
                                  rng=rng, buffer=buffer)

    success_ratio = summaries[-1]["success_ratio"] if summaries else 0.0
    collision_ratio = summaries[-1]["collision_ratio"] if summaries else 0.0
    convergence = _convergence_steps(outcomes, step_counts, cfg["train"]["window"])

    checkpoint_path = None
    if out is not None:
        atomic_write_text(out / "episodes.ndjson",
                          "".join(line + "\n" for line in log_lines))
        checkpoint_path = out / "final.ckpt"
        agent.save_checkpoint(
            checkpoint_path, episode=episodes, label=st.reward_mode, rng=rng,
            buffer=buffer,
            extra_entries={
                "slam.log_odds": slam.grid.log_odds,
                "slam.observed": slam.grid.observed,
                "slam.meta": {"update_counter": slam.grid.update_counter,
                              "resample_count": slam.resample_count},
            })
        save_grid(slam.grid, out / "map.grid")
        summary = {
            "episodes": episodes,
            "success_ratio": success_ratio,
            "collision_ratio": collision_ratio,
            # env steps until the success ratio (rolling window) first reaches
            # 0.80 and stays there for the remainder of training
            "convergence_steps_sustained_80": convergence,
            "success_curve": [s["success_ratio"] for s in summaries],
            "collision_curve": [s["collision_ratio"] for s in summaries],
            "reward_mode": st.reward_mode,
            "seed": cfg["seed"],
            "world": world.name,
        }
        atomic_write_text(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    return TrainReport(episodes=summaries, success_ratio=success_ratio,
                       collision_ratio=collision_ratio, convergence_steps=convergence,
                       checkpoint_path=checkpoint_path, out_dir=out)


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    n_targets: int
    success_ratio: float
    actions_mean: float | None
    actions_std: float | None
    outcome_counts: dict
    records: list[EpisodeRecord]


def _eval_episode(args) -> EpisodeRecord:
    world, agent, setup, st, entropy = args
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    return run_episode(world, agent, None, setup, st, rng, learn=False)


def evaluate(agent: DdpgAgent, world: World, n_targets: int, cfg: dict, *,
             seed: int, workers: int = 1) -> EvalReport:
    """Frozen-policy evaluation on a seed-determined target set.

    The same seed yields the same start/goal pairs and odometry noise
    streams, so two agents evaluated with one seed face identical targets.
    """
    st = EpisodeSettings.from_config(cfg, evaluation=True)
    setup_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    setups = [sample_episode_setup(world, setup_rng, robot_radius=st.robot_radius,
                                   resolution=cfg["grid"]["resolution"])
              for _ in range(n_targets)]
    jobs = [(world, agent, setups[i], st, [seed, 2, i]) for i in range(n_targets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_eval_episode, jobs, chunksize=4))
    else:
        records = [_eval_episode(job) for job in jobs]
    counts: dict = {}
    for rec in records:
        counts[rec.outcome.value] = counts.get(rec.outcome.value, 0) + 1
    successes = [rec.steps for rec in records if rec.success]
    return EvalReport(
        n_targets=n_targets,
        success_ratio=len(successes) / n_targets if n_targets else 0.0,
        actions_mean=float(np.mean(successes)) if successes else None,
        actions_std=float(np.std(successes)) if successes else None,
        outcome_counts=counts, records=records)


def waypoint_run(agent: DdpgAgent, world: World, start: RobotState,
                 goals: list[tuple[float, float]], cfg: dict, *, seed: int = 0) -> dict:
    """Chase an ordered goal list, re-targeting on each arrival; abort on a crash."""
    if not goals:
        raise ValueError("waypoint_run needs at least one goal")
    st = EpisodeSettings.from_config(cfg, evaluation=True)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    segments: list[EpisodeRecord] = []
    trajectory: list[tuple[float, float, float]] = []
    current = start
    for goal in goals:
        rec = run_episode(world, agent, None, (current, goal), st, rng, learn=False)
        segments.append(rec)
        trajectory.extend(rec.trajectory if not trajectory else rec.trajectory[1:])
        if rec.outcome is not StepOutcome.REACHED:
            break
        pose = rec.trajectory[-1]
        current = RobotState(x=pose[0], y=pose[1], heading=pose[2])
    return {
        "segments": segments,
        "trajectory": trajectory,
        "goals_reached": sum(1 for r in segments if r.success),
        "completed": all(r.success for r in segments) and len(segments) == len(goals),
        "final_outcome": segments[-1].outcome,
    }


def write_trajectory_csv(path: str | Path, record_or_run) -> None:
    """CSV export with columns t, x, y, heading, v, omega, reward."""
    if isinstance(record_or_run, dict):
        trajectory = record_or_run["trajectory"]
        actions = [a for seg in record_or_run["segments"] for a in seg.actions]
        rewards = [r for seg in record_or_run["segments"] for r in seg.rewards]
    else:
        trajectory = record_or_run.trajectory
        actions = record_or_run.actions
        rewards = record_or_run.rewards
    lines = ["t,x,y,heading,v,omega,reward"]
    for i, pose in enumerate(trajectory):
        v, w = actions[i - 1] if i > 0 else (0.0, 0.0)
        r = rewards[i - 1] if i > 0 else 0.0
        lines.append(f"{i},{pose[0]:.9g},{pose[1]:.9g},{pose[2]:.9g},{v:.9g},{w:.9g},{r:.9g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------- benchmark

def _benchmark_train_job(args) -> dict:
    cfg, world_spec, out_dir = args
    world = resolve_world(world_spec)
    report = train(cfg, world=world, out_dir=out_dir)
    return {
        "seed": cfg["seed"], "mode": cfg["reward"]["mode"],
        "checkpoint": str(report.checkpoint_path),
        "train_success_ratio": report.success_ratio,
        "collision_ratio": report.collision_ratio,
        "convergence_steps": report.convergence_steps,
    }


def _benchmark_eval_job(args) -> dict:
    checkpoint, world_spec, cfg, eval_seed, n_targets = args
    agent, meta, _ = DdpgAgent.load_checkpoint(checkpoint)
    world = resolve_world(world_spec)
    report = evaluate(agent, world, n_targets, cfg, seed=eval_seed)
    return {
        "label": meta.get("label", ""),
        "world": world.name,
        "success_ratio": report.success_ratio,
        "actions_mean": report.actions_mean,
        "actions_std": report.actions_std,
        "outcomes": report.outcome_counts,
    }


def run_benchmark(cfg: dict, *, seeds: list[int], train_world: str, unseen_world: str,
                  out_dir: str | Path, n_targets: int = 100, workers: int = 1) -> dict:
    """Train dense and shaped agents per seed, then compare on shared target sets.

    Returns one row per seed with evaluation results in the training world
    and the unseen world, plus the directional verdicts.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_jobs = []
    for seed in seeds:
        for mode in ("dense", "shaped"):
            job_cfg = json.loads(json.dumps(cfg))  # deep copy
            job_cfg["seed"] = seed
            job_cfg["reward"]["mode"] = mode
            train_jobs.append((job_cfg, train_world, str(out / f"seed{seed}_{mode}")))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            train_results = list(pool.map(_benchmark_train_job, train_jobs))
    else:
        train_results = [_benchmark_train_job(j) for j in train_jobs]
    by_key = {(r["seed"], r["mode"]): r for r in train_results}

    eval_jobs = []
    for seed in seeds:
        for world_spec, world_seed_salt in ((train_world, 101), (unseen_world, 202)):
            for mode in ("dense", "shaped"):
                eval_jobs.append((by_key[(seed, mode)]["checkpoint"], world_spec, cfg,
                                  seed * 1000 + world_seed_salt, n_targets))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            eval_results = list(pool.map(_benchmark_eval_job, eval_jobs))
    else:
        eval_results = [_benchmark_eval_job(j) for j in eval_jobs]

    rows = []
    idx = 0
    for seed in seeds:
        row: dict = {"seed": seed,
                     "train": {m: by_key[(seed, m)] for m in ("dense", "shaped")},
                     "eval": {}}
        for world_key in ("train_world", "unseen_world"):
            row["eval"][world_key] = {}
            for mode in ("dense", "shaped"):
                row["eval"][world_key][mode] = eval_results[idx]
                idx += 1
        rows.append(row)
    verdict = benchmark_verdict(rows)
    result = {"rows": rows, "verdict": verdict, "seeds": seeds,
              "train_world": train_world, "unseen_world": unseen_world}
    atomic_write_text(out / "benchmark.json", json.dumps(result, indent=2) + "\n")
    return result


def benchmark_verdict(rows: list[dict]) -> dict:
    """Per-seed directional checks and the seed-majority aggregate."""
    per_seed = []
    for row in rows:
        ev = row["eval"]
        shaped_tw = ev["train_world"]["shaped"]
        dense_tw = ev["train_world"]["dense"]
        shaped_uw = ev["unseen_world"]["shaped"]
        dense_uw = ev["unseen_world"]["dense"]
        checks = {
            "shaped_ge_dense_train_world":
                shaped_tw["success_ratio"] >= dense_tw["success_ratio"],
            "shaped_ge_dense_unseen_world":
                shaped_uw["success_ratio"] >= dense_uw["success_ratio"],
            "shaped_train_world_at_least_60pct": shaped_tw["success_ratio"] >= 0.60,
            "shaped_actions_le_dense":
                shaped_tw["actions_mean"] is not None
                and (dense_tw["actions_mean"] is None
                     or shaped_tw["actions_mean"] <= dense_tw["actions_mean"]),
        }
        per_seed.append({"seed": row["seed"], "checks": checks,
                         "all_pass": all(checks.values())})
    n_pass = sum(1 for p in per_seed if p["all_pass"])
    return {"per_seed": per_seed, "seeds_passing": n_pass,
            "majority_pass": n_pass * 2 > len(per_seed)}
