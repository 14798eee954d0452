"""Three-case navigation rewards: dense goal-distance baseline and the map-shaped variant.

Terminal cases pay the sparse values; the running case pays ``1 - exp(decay * d)``
(zero at the goal, increasingly negative with distance).  The shaped variant
subtracts a nonnegative obstacle-proximity term weighted by map confidence,
so shaped <= dense while running and the sparse cases are untouched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class StepOutcome(enum.Enum):
    RUNNING = "running"
    REACHED = "reached"
    CRASHED = "crashed"
    TIMED_OUT = "timed_out"

    @property
    def terminal(self) -> bool:
        return self is not StepOutcome.RUNNING


@dataclass(frozen=True)
class RewardParams:
    r_reached: float = 100.0
    r_crashed: float = -100.0
    decay_rate: float = 0.35   # exponential decay of the running term, not the discount
    d_min: float = 0.3         # goal tolerance, meters
    max_steps: int = 1000

    def __post_init__(self) -> None:
        if not self.r_reached > 0.0 > self.r_crashed:
            raise ValueError("need r_reached > 0 > r_crashed")
        if self.d_min <= 0.0:
            raise ValueError("d_min must be positive")
        if self.decay_rate <= 0.0:
            raise ValueError("decay_rate must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def dense_reward(d: float, outcome: StepOutcome, params: RewardParams) -> float:
    """Goal-distance reward; terminal outcomes ignore d."""
    if d < 0.0:
        raise ValueError("distance must be nonnegative")
    if outcome is StepOutcome.REACHED:
        return params.r_reached
    if outcome in (StepOutcome.CRASHED, StepOutcome.TIMED_OUT):
        return params.r_crashed
    return 1.0 - math.exp(params.decay_rate * d)


def map_term_from_distances(distances: np.ndarray, confidence: float) -> float:
    """Obstacle-proximity term: confidence * mean(exp(-c_j)) over k occupied cells.

    Returns 0 when no occupied cell is in view (k = 0).
    """
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    c = np.asarray(distances, dtype=float)
    if c.size == 0:
        return 0.0
    if np.any(c < 0.0):
        raise ValueError("occupied-cell distances must be nonnegative")
    return float(confidence * np.mean(np.exp(-c)))


def map_term(fov_cells: Sequence[tuple[object, float]], confidence: float) -> float:
    """Same as map_term_from_distances for a [(cell, distance), ...] list."""
    return map_term_from_distances(np.array([d for _, d in fov_cells]), confidence)


def shaped_reward(d: float, outcome: StepOutcome,
                  fov_cells: Sequence[tuple[object, float]], confidence: float,
                  params: RewardParams) -> float:
    """Dense reward minus the map term while running; sparse cases unchanged."""
    base = dense_reward(d, outcome, params)
    if outcome.terminal:
        return base
    return base - map_term(fov_cells, confidence)


def shaped_reward_from_distances(d: float, outcome: StepOutcome,
                                 distances: np.ndarray, confidence: float,
                                 params: RewardParams) -> float:
    base = dense_reward(d, outcome, params)
    if outcome.terminal:
        return base
    return base - map_term_from_distances(distances, confidence)
