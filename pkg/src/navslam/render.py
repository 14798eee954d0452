"""Static figures: world/map/trajectory overlays and reward-surface heatmaps."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reward import RewardParams, StepOutcome, dense_reward, map_term_from_distances
from .slam_grid import OccupancyGrid, cells_in_fov, map_posterior_confidence, \
    occupied_fov_distances
from .world import World

# cell class colors: free white, occupied black, unknown gray
_FREE_RGB = (255, 255, 255)
_OCCUPIED_RGB = (0, 0, 0)
_UNKNOWN_RGB = (160, 160, 160)


def grid_to_rgb(grid: OccupancyGrid) -> np.ndarray:
    """One pixel per cell; pixel class matches the cell class exactly."""
    img = np.empty((grid.height, grid.width, 3), dtype=np.uint8)
    img[:] = _UNKNOWN_RGB
    img[grid.free_mask()] = _FREE_RGB
    img[grid.occupied_mask()] = _OCCUPIED_RGB
    return img


def _draw_world(ax, world: World) -> None:
    w, h = world.bounds
    ax.plot([0, w, w, 0, 0], [0, 0, h, h, 0], color="black", lw=1.5)
    for poly in world.obstacles:
        closed = np.vstack([poly, poly[:1]])
        ax.fill(closed[:, 0], closed[:, 1], color="dimgray", alpha=0.6, lw=0)
        ax.plot(closed[:, 0], closed[:, 1], color="black", lw=1.0)
    ax.set_aspect("equal")
    ax.set_xlim(-0.1, w + 0.1)
    ax.set_ylim(-0.1, h + 0.1)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def render_overlay(path: str | Path, world: World, *, grid: OccupancyGrid | None = None,
                   trajectories: list[np.ndarray] | None = None,
                   goals: list[tuple[float, float]] | None = None,
                   title: str | None = None) -> None:
    """World outline with an optional occupancy raster and trajectory lines."""
    fig, ax = plt.subplots(figsize=(6, 6 * world.bounds[1] / world.bounds[0]))
    if grid is not None:
        extent = (grid.origin[0], grid.origin[0] + grid.width * grid.resolution,
                  grid.origin[1], grid.origin[1] + grid.height * grid.resolution)
        ax.imshow(grid_to_rgb(grid), origin="lower", extent=extent,
                  interpolation="nearest", zorder=0, alpha=0.9)
    _draw_world(ax, world)
    for traj in trajectories or []:
        t = np.asarray(traj)
        ax.plot(t[:, 0], t[:, 1], lw=1.5, zorder=3)
        ax.plot(t[0, 0], t[0, 1], marker="o", ms=5, color="tab:green", zorder=4)
        ax.plot(t[-1, 0], t[-1, 1], marker="x", ms=7, color="tab:red", zorder=4)
    for g in goals or []:
        ax.plot(g[0], g[1], marker="*", ms=12, color="black", zorder=5)
    ax.set_title(title or world.name)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def reward_surface(world: World, grid: OccupancyGrid, goal: tuple[float, float],
                   params: RewardParams, *, confidence: float | None = None,
                   step: float = 0.05, fov_range: float = 2.0,
                   confidence_mode: str = "geometric"):
    """Sample the running-case shaped reward on a lattice over the world.

    At each point the robot is assumed to face the goal.  confidence, when
    given, overrides the per-point FOV confidence (for visualizing how the
    surface deepens as the map firms up).

    Returns (xs, ys, values) with values shaped (len(ys), len(xs)).
    """
    w, h = world.bounds
    xs = np.arange(step / 2.0, w, step)
    ys = np.arange(step / 2.0, h, step)
    values = np.zeros((len(ys), len(xs)))
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            d = math.hypot(goal[0] - x, goal[1] - y)
            heading = math.atan2(goal[1] - y, goal[0] - x)
            _, _, dists = occupied_fov_distances(grid, (x, y, heading), fov_range)
            if confidence is not None:
                conf = confidence
            else:
                rows, cols = cells_in_fov(grid, (x, y, heading), range_m=fov_range)
                conf = 0.5 if len(rows) == 0 else min(
                    map_posterior_confidence(grid, (rows, cols), confidence_mode), 1.0)
            base = dense_reward(d, StepOutcome.RUNNING, params)
            values[iy, ix] = base - map_term_from_distances(dists, conf)
    return xs, ys, values


def render_reward_heatmap(path: str | Path, world: World, grid: OccupancyGrid,
                          goal: tuple[float, float], params: RewardParams, *,
                          confidence: float | None = None, step: float = 0.05) -> None:
    xs, ys, values = reward_surface(world, grid, goal, params,
                                    confidence=confidence, step=step)
    fig, ax = plt.subplots(figsize=(7, 6 * world.bounds[1] / world.bounds[0]))
    im = ax.pcolormesh(xs, ys, values, shading="nearest", cmap="viridis")
    _draw_world(ax, world)
    ax.plot(goal[0], goal[1], marker="*", ms=12, color="white")
    fig.colorbar(im, ax=ax, label="running reward")
    conf_note = "map-derived" if confidence is None else f"{confidence:.2f}"
    ax.set_title(f"{world.name}: reward surface (confidence {conf_note})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
