"""Particle-filter pose estimation with importance weighting and selective resampling.

The filter keeps a fixed-size set of weighted pose hypotheses.  Prediction
samples the odometry motion model per particle; weighting scores each
hypothesis with a likelihood field over the occupancy grid (Gaussian kernel
on the distance from beam endpoints to the nearest occupied cell, with a
uniform floor); resampling is systematic and only triggers when the
effective sample size drops below a configured fraction of N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .robot import OdometryReading, OdomNoiseParams, normalize_angle, sample_motion_deltas
from .slam_grid import OccupancyGrid
from .world import LIDAR_MAX_RANGE_M, LidarScan

DEFAULT_NUM_PARTICLES = 30
DEFAULT_NEFF_FRACTION = 0.5
DEFAULT_SIGMA_HIT_M = 0.1
DEFAULT_FLOOR = 0.05

# endpoints falling outside the mapped area score near the uniform floor
_OUT_OF_GRID_DISTANCE_M = 2.0 * LIDAR_MAX_RANGE_M


@dataclass(frozen=True)
class Particle:
    pose: tuple[float, float, float]
    weight: float
    trajectory_tail: tuple[float, float, float] | None = None


@dataclass
class ParticleSet:
    """Fixed-size weighted particle set; N stays constant across an episode."""

    poses: np.ndarray                     # (N, 3) columns x, y, heading
    weights: np.ndarray                   # (N,) nonnegative
    tails: np.ndarray | None = None       # (N, 3) pose before the last predict
    normalized: bool = False
    degenerate: bool = False

    def __post_init__(self) -> None:
        if self.poses.ndim != 2 or self.poses.shape[1] != 3 or len(self.poses) < 1:
            raise ValueError("poses must be a nonempty (N, 3) array")
        if self.weights.shape != (len(self.poses),):
            raise ValueError("weights must be shaped (N,)")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and nonnegative")

    @classmethod
    def at_pose(cls, pose: tuple[float, float, float], n: int = DEFAULT_NUM_PARTICLES) -> "ParticleSet":
        poses = np.tile(np.asarray(pose, dtype=float), (n, 1))
        return cls(poses=poses, weights=np.full(n, 1.0 / n), normalized=True)

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def particles(self) -> list[Particle]:
        tails = self.tails if self.tails is not None else [None] * len(self)
        return [Particle(pose=tuple(p), weight=float(w),
                         trajectory_tail=None if t is None else tuple(t))
                for p, w, t in zip(self.poses, self.weights, tails)]


def _require_normalized(pset: ParticleSet, op: str) -> None:
    if not pset.normalized or abs(float(np.sum(pset.weights)) - 1.0) > 1e-9:
        raise ValueError(f"{op} requires a normalized particle set")


def predict(pset: ParticleSet, odom: OdometryReading, noise: OdomNoiseParams,
            rng: np.random.Generator) -> ParticleSet:
    """Propagate every particle through the sampled odometry motion model."""
    n = len(pset)
    rot1, trans, rot2 = sample_motion_deltas(odom, noise, rng, n)
    x, y, h = pset.poses[:, 0], pset.poses[:, 1], pset.poses[:, 2]
    nx = x + trans * np.cos(h + rot1)
    ny = y + trans * np.sin(h + rot1)
    nh = np.array([normalize_angle(a) for a in h + rot1 + rot2])
    return ParticleSet(poses=np.column_stack([nx, ny, nh]),
                       weights=pset.weights.copy(), tails=pset.poses.copy(),
                       normalized=pset.normalized)


def scan_log_likelihoods(poses: np.ndarray, scan: LidarScan, grid: OccupancyGrid,
                         sigma_hit: float = DEFAULT_SIGMA_HIT_M,
                         floor: float = DEFAULT_FLOOR) -> np.ndarray | None:
    """Likelihood-field log score of one scan at each pose, or None when the
    grid has no occupied cells to score against."""
    dist_field = grid.distance_field()
    if dist_field is None:
        return None
    hits = scan.ranges < LIDAR_MAX_RANGE_M - 1e-9
    if not hits.any():
        return np.zeros(len(poses))
    r = scan.ranges[hits]
    rel = scan.bearings[hits]
    ang = poses[:, 2][:, None] + rel[None, :]
    ex = poses[:, 0][:, None] + r[None, :] * np.cos(ang)
    ey = poses[:, 1][:, None] + r[None, :] * np.sin(ang)
    ix = np.floor((ex - grid.origin[0]) / grid.resolution).astype(int)
    iy = np.floor((ey - grid.origin[1]) / grid.resolution).astype(int)
    inside = (ix >= 0) & (ix < grid.width) & (iy >= 0) & (iy < grid.height)
    d = np.full(ix.shape, _OUT_OF_GRID_DISTANCE_M)
    d[inside] = dist_field[iy[inside], ix[inside]]
    p = floor + (1.0 - floor) * np.exp(-0.5 * (d / sigma_hit) ** 2)
    with np.errstate(divide="ignore"):  # log(0) -> -inf is a valid degenerate score
        return np.sum(np.log(p), axis=1)


def update_weights(pset: ParticleSet, scan: LidarScan, grid: OccupancyGrid, *,
                   sigma_hit: float = DEFAULT_SIGMA_HIT_M,
                   floor: float = DEFAULT_FLOOR) -> ParticleSet:
    """Multiply weights by the observation likelihood and renormalize.

    A grid without occupied cells carries no information, so weights become
    uniform.  If every weight underflows to zero the set is reset to uniform
    and flagged degenerate.
    """
    n = len(pset)
    loglik = scan_log_likelihoods(pset.poses, scan, grid, sigma_hit, floor)
    if loglik is None:
        return ParticleSet(poses=pset.poses.copy(), weights=np.full(n, 1.0 / n),
                           tails=None if pset.tails is None else pset.tails.copy(),
                           normalized=True)
    with np.errstate(invalid="ignore"):  # -inf log-likelihoods handled as degeneracy
        w = pset.weights * np.exp(loglik - np.max(loglik))
    total = float(np.sum(w))
    if not math.isfinite(total) or total <= 0.0:
        return ParticleSet(poses=pset.poses.copy(), weights=np.full(n, 1.0 / n),
                           tails=None if pset.tails is None else pset.tails.copy(),
                           normalized=True, degenerate=True)
    return ParticleSet(poses=pset.poses.copy(), weights=w / total,
                       tails=None if pset.tails is None else pset.tails.copy(),
                       normalized=True)


def effective_sample_size(pset: ParticleSet) -> float:
    """N_eff = 1 / sum(w^2); ranges from 1 (degenerate) to N (uniform)."""
    _require_normalized(pset, "effective_sample_size")
    return float(1.0 / np.sum(pset.weights ** 2))


def resample_if_needed(pset: ParticleSet, threshold_fraction: float = DEFAULT_NEFF_FRACTION,
                       rng: np.random.Generator | None = None) -> ParticleSet:
    """Systematic resampling when N_eff < threshold_fraction * N, else unchanged."""
    if not 0.0 < threshold_fraction <= 1.0:
        raise ValueError("threshold_fraction must be in (0, 1]")
    _require_normalized(pset, "resample_if_needed")
    n = len(pset)
    if effective_sample_size(pset) >= threshold_fraction * n:
        return pset
    if rng is None:
        raise ValueError("resampling requires an rng")
    positions = (rng.uniform(0.0, 1.0 / n) + np.arange(n) / n)
    cumulative = np.cumsum(pset.weights)
    cumulative[-1] = 1.0  # guard against roundoff at the top end
    idx = np.searchsorted(cumulative, positions, side="left")
    return ParticleSet(poses=pset.poses[idx].copy(), weights=np.full(n, 1.0 / n),
                       tails=None if pset.tails is None else pset.tails[idx].copy(),
                       normalized=True)


def estimate_pose(pset: ParticleSet) -> tuple[float, float, float]:
    """Weighted mean position and weighted circular mean heading."""
    _require_normalized(pset, "estimate_pose")
    w = pset.weights
    x = float(np.sum(w * pset.poses[:, 0]))
    y = float(np.sum(w * pset.poses[:, 1]))
    h = math.atan2(float(np.sum(w * np.sin(pset.poses[:, 2]))),
                   float(np.sum(w * np.cos(pset.poses[:, 2]))))
    return (x, y, normalize_angle(h))
