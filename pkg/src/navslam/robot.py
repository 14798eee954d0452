"""Differential-drive kinematics and the sampled odometry channel.

Pure functions over value types; every random draw takes an explicit rng.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

V_MAX = 0.25   # m/s, linear velocity limit
W_MAX = 1.0    # rad/s, angular velocity limit
DEFAULT_DT = 0.1  # 10 Hz control rate


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(theta, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float  # radians, normalized to (-pi, pi]
    v: float = 0.0
    omega: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.heading)


@dataclass(frozen=True)
class OdometryReading:
    """Rot-trans-rot decomposition of the motion between two consecutive poses."""

    delta_rot1: float
    delta_trans: float
    delta_rot2: float


@dataclass(frozen=True)
class OdomNoiseParams:
    """Coefficients of the four-parameter odometry noise model.

    alpha1/alpha2 scale rotational noise by rotation/translation magnitude,
    alpha3/alpha4 scale translational noise likewise.
    """

    alpha1: float = 0.05
    alpha2: float = 0.05
    alpha3: float = 0.01
    alpha4: float = 0.01


def clamp_action(v_cmd: float, w_cmd: float) -> tuple[float, float]:
    """Saturate a command to the actuator limits [0, V_MAX] x [-W_MAX, W_MAX]."""
    return (min(max(v_cmd, 0.0), V_MAX), min(max(w_cmd, -W_MAX), W_MAX))


def step(state: RobotState, action: tuple[float, float], dt: float = DEFAULT_DT) -> RobotState:
    """Advance the unicycle one control period with explicit Euler integration.

    Commands are clamped before integration; the translation uses the heading
    at the start of the interval.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not (math.isfinite(action[0]) and math.isfinite(action[1])):
        raise ValueError(f"non-finite action {action}")
    v, w = clamp_action(action[0], action[1])
    return RobotState(
        x=state.x + v * math.cos(state.heading) * dt,
        y=state.y + v * math.sin(state.heading) * dt,
        heading=normalize_angle(state.heading + w * dt),
        v=v,
        omega=w,
    )


def odometry_decompose(prev: RobotState, curr: RobotState) -> OdometryReading:
    """Exact (rot1, trans, rot2) decomposition between two poses."""
    dx, dy = curr.x - prev.x, curr.y - prev.y
    trans = math.hypot(dx, dy)
    if trans < 1e-12:
        rot1 = 0.0  # pure rotation: attribute everything to rot2
    else:
        rot1 = normalize_angle(math.atan2(dy, dx) - prev.heading)
    rot2 = normalize_angle(curr.heading - prev.heading - rot1)
    return OdometryReading(rot1, trans, rot2)


def sample_motion_deltas(reading: OdometryReading, noise: OdomNoiseParams,
                         rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw n noisy (rot1, trans, rot2) triples around a measured reading."""
    r1, tr, r2 = reading.delta_rot1, reading.delta_trans, reading.delta_rot2
    std_r1 = math.sqrt(noise.alpha1 * r1 * r1 + noise.alpha2 * tr * tr)
    std_tr = math.sqrt(noise.alpha3 * tr * tr + noise.alpha4 * (r1 * r1 + r2 * r2))
    std_r2 = math.sqrt(noise.alpha1 * r2 * r2 + noise.alpha2 * tr * tr)
    rot1 = r1 + (rng.normal(0.0, std_r1, size=n) if std_r1 > 0 else np.zeros(n))
    trans = tr + (rng.normal(0.0, std_tr, size=n) if std_tr > 0 else np.zeros(n))
    rot2 = r2 + (rng.normal(0.0, std_r2, size=n) if std_r2 > 0 else np.zeros(n))
    return rot1, np.maximum(trans, 0.0), rot2


def odometry_between(prev: RobotState, curr: RobotState, noise: OdomNoiseParams,
                     rng: np.random.Generator) -> OdometryReading:
    """Noisy odometry measurement of the motion between two true poses."""
    exact = odometry_decompose(prev, curr)
    rot1, trans, rot2 = sample_motion_deltas(exact, noise, rng, n=1)
    return OdometryReading(float(rot1[0]), float(trans[0]), float(rot2[0]))


def apply_odometry(pose: tuple[float, float, float],
                   reading: OdometryReading) -> tuple[float, float, float]:
    """Propagate a pose through an odometry reading (dead reckoning)."""
    x, y, h = pose
    x += reading.delta_trans * math.cos(h + reading.delta_rot1)
    y += reading.delta_trans * math.sin(h + reading.delta_rot1)
    return (x, y, normalize_angle(h + reading.delta_rot1 + reading.delta_rot2))
