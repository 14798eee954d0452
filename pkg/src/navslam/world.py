"""World geometry: bounded rectangle, convex polygon obstacles, lidar raycasting.

A world is immutable after loading.  All queries here are pure functions, so
one world can be shared freely across concurrent readers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

LIDAR_BEAM_COUNT = 40
LIDAR_FOV_RAD = math.pi  # 180 degrees
LIDAR_MIN_RANGE_M = 0.2
LIDAR_MAX_RANGE_M = 2.0

_EPS = 1e-12


class WorldFormatError(ValueError):
    """Environment file failed to parse or violates a geometric invariant."""


def beam_bearings() -> np.ndarray:
    """Fixed beam bearings in the robot frame: 40 angles from -90 to +90 deg inclusive."""
    return np.linspace(-LIDAR_FOV_RAD / 2.0, LIDAR_FOV_RAD / 2.0, LIDAR_BEAM_COUNT)


@dataclass(frozen=True)
class LidarScan:
    """One scan: ranges[i] (clamped to [0.2, 2.0] m) along bearings[i] (robot frame)."""

    ranges: np.ndarray
    bearings: np.ndarray


@dataclass
class World:
    """Axis-aligned bounded rectangle [0,w] x [0,h] with convex CCW obstacles.

    Args:
        bounds: (width, height) in meters, both > 0.
        obstacles: list of (K,2) float arrays, vertices counter-clockwise,
            strictly convex, at least 3 vertices, all inside bounds.
        name: label used in reports and rendered figures.
    """

    bounds: tuple[float, float]
    obstacles: list[np.ndarray]
    name: str = ""
    _seg_p0: np.ndarray = field(init=False, repr=False)
    _seg_vec: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        w, h = self.bounds
        if not (w > 0 and h > 0):
            raise WorldFormatError(f"bounds must be positive, got {self.bounds}")
        self.obstacles = [np.asarray(p, dtype=float) for p in self.obstacles]
        for i, poly in enumerate(self.obstacles):
            _validate_polygon(poly, i, w, h)
        segs = [_rect_segments(w, h)]
        for poly in self.obstacles:
            segs.append(np.stack([poly, np.roll(poly, -1, axis=0)], axis=1))
        all_segs = np.concatenate(segs, axis=0)
        self._seg_p0 = all_segs[:, 0, :]
        self._seg_vec = all_segs[:, 1, :] - all_segs[:, 0, :]

    @property
    def diagonal(self) -> float:
        return math.hypot(self.bounds[0], self.bounds[1])


def _rect_segments(w: float, h: float) -> np.ndarray:
    corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    return np.stack([corners, np.roll(corners, -1, axis=0)], axis=1)


def _validate_polygon(poly: np.ndarray, index: int, w: float, h: float) -> None:
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise WorldFormatError(f"obstacle {index}: needs at least 3 (x, y) vertices")
    if not np.all(np.isfinite(poly)):
        raise WorldFormatError(f"obstacle {index}: non-finite vertex")
    if np.any(poly[:, 0] < -_EPS) or np.any(poly[:, 0] > w + _EPS) \
            or np.any(poly[:, 1] < -_EPS) or np.any(poly[:, 1] > h + _EPS):
        raise WorldFormatError(f"obstacle {index}: vertex outside bounds")
    edges = np.roll(poly, -1, axis=0) - poly
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] \
        - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    area = 0.5 * float(np.sum(poly[:, 0] * np.roll(poly, -1, axis=0)[:, 1]
                               - poly[:, 1] * np.roll(poly, -1, axis=0)[:, 0]))
    if abs(area) < 1e-9:
        raise WorldFormatError(f"obstacle {index}: zero area")
    if np.any(cross <= _EPS):
        raise WorldFormatError(
            f"obstacle {index}: vertices must be strictly convex and counter-clockwise")


# ---------------------------------------------------------------- file format

def load_world(path: str | Path) -> World:
    """Load and validate an environment file.

    The format is YAML with ``format: 1``, ``bounds: [w, h]`` and
    ``obstacles`` as a list of vertex lists (meters, CCW).
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise WorldFormatError(f"{path}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise WorldFormatError(f"{path}: expected a mapping at top level")
    if raw.get("format") != 1:
        raise WorldFormatError(f"{path}: missing or unsupported 'format' (expected 1)")
    try:
        bounds = (float(raw["bounds"][0]), float(raw["bounds"][1]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise WorldFormatError(f"{path}: 'bounds' must be [width, height]") from exc
    obstacles = raw.get("obstacles") or []
    if not isinstance(obstacles, list):
        raise WorldFormatError(f"{path}: 'obstacles' must be a list")
    name = str(raw.get("name", path.stem))
    return World(bounds=bounds, obstacles=[np.asarray(o, dtype=float) for o in obstacles],
                 name=name)


def bundled_world_path(name: str) -> Path:
    """Path of a world file shipped with the package (env1, env2, env3, desk-train, ...)."""
    from importlib.resources import files

    p = Path(str(files("navslam") / "worlds" / f"{name}.yaml"))
    if not p.exists():
        raise WorldFormatError(f"no bundled world named {name!r}")
    return p


def resolve_world(spec: str | Path) -> World:
    """Load a world from a filesystem path, falling back to the bundled set."""
    p = Path(spec)
    if p.exists():
        return load_world(p)
    try:
        return load_world(bundled_world_path(str(spec)))
    except WorldFormatError:
        raise WorldFormatError(f"world {spec!r} is neither a file nor a bundled name")


# ------------------------------------------------------------------- queries

def _point_in_bounds(world: World, x: float, y: float) -> bool:
    w, h = world.bounds
    return 0.0 <= x <= w and 0.0 <= y <= h


def _strictly_inside(poly: np.ndarray, x: float, y: float) -> bool:
    p1 = np.roll(poly, -1, axis=0)
    e = p1 - poly
    cross = e[:, 0] * (y - poly[:, 1]) - e[:, 1] * (x - poly[:, 0])
    return bool(np.all(cross > _EPS))


def _polygon_distance(poly: np.ndarray, x: float, y: float) -> float:
    """Distance from a point to a convex polygon; 0 when inside or on the boundary."""
    p1 = np.roll(poly, -1, axis=0)
    e = p1 - poly
    wx, wy = x - poly[:, 0], y - poly[:, 1]
    cross = e[:, 0] * wy - e[:, 1] * wx
    if np.all(cross >= 0.0):
        return 0.0
    ee = np.sum(e * e, axis=1)
    t = np.clip((wx * e[:, 0] + wy * e[:, 1]) / ee, 0.0, 1.0)
    dx = wx - t * e[:, 0]
    dy = wy - t * e[:, 1]
    return float(np.sqrt(np.min(dx * dx + dy * dy)))


def _ray_distances(world: World, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Exact first-hit distance for each unit direction against all wall segments."""
    p0, e = world._seg_p0, world._seg_vec
    w = p0 - origin[None, :]
    t_num = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]                       # cross(w, e)
    denom = directions[:, 0:1] * e[None, :, 1] - directions[:, 1:2] * e[None, :, 0]
    s_num = w[None, :, 0] * directions[:, 1:2] - w[None, :, 1] * directions[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num[None, :] / denom
        s = s_num / denom
    valid = (np.abs(denom) > _EPS) & (t >= -1e-9) & (s >= -1e-9) & (s <= 1.0 + 1e-9)
    t = np.where(valid, t, np.inf)
    return np.maximum(t.min(axis=1), 0.0)


def _require_free_origin(world: World, x: float, y: float) -> None:
    if not _point_in_bounds(world, x, y):
        raise ValueError(f"ray origin ({x:.3f}, {y:.3f}) outside world bounds")
    for i, poly in enumerate(world.obstacles):
        if _strictly_inside(poly, x, y):
            raise ValueError(f"ray origin ({x:.3f}, {y:.3f}) inside obstacle {i}")


def is_free_origin(world: World, x: float, y: float) -> bool:
    """True when a point can serve as a ray origin (in bounds, not inside an obstacle)."""
    return _point_in_bounds(world, x, y) \
        and not any(_strictly_inside(poly, x, y) for poly in world.obstacles)


def raycast(world: World, origin: tuple[float, float], bearing: float,
            r_max: float = LIDAR_MAX_RANGE_M) -> float:
    """Distance to the nearest wall or obstacle edge along the ray, capped at r_max.

    Raises ValueError when the origin is outside bounds or inside an obstacle.
    """
    x, y = float(origin[0]), float(origin[1])
    _require_free_origin(world, x, y)
    d = np.array([[math.cos(bearing), math.sin(bearing)]])
    return float(min(_ray_distances(world, np.array([x, y]), d)[0], r_max))


def scan(world: World, pose: tuple[float, float, float], *,
         noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> LidarScan:
    """Simulate the 40-beam lidar at a pose (x, y, heading).

    Ranges are clamped to the sensor window [0.2, 2.0] m; optional additive
    Gaussian noise is applied before clamping.
    """
    x, y, heading = float(pose[0]), float(pose[1]), float(pose[2])
    _require_free_origin(world, x, y)
    rel = beam_bearings()
    ang = heading + rel
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    r = _ray_distances(world, np.array([x, y]), dirs)
    r = np.minimum(r, LIDAR_MAX_RANGE_M)
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        r = r + rng.normal(0.0, noise_sigma, size=r.shape)
    return LidarScan(ranges=np.clip(r, LIDAR_MIN_RANGE_M, LIDAR_MAX_RANGE_M), bearings=rel)


def collides(world: World, position: tuple[float, float], robot_radius: float) -> bool:
    """True when a disc of robot_radius at position overlaps an obstacle or exits bounds."""
    if robot_radius <= 0.0:
        raise ValueError("robot_radius must be positive")
    x, y = float(position[0]), float(position[1])
    w, h = world.bounds
    if x - robot_radius < 0.0 or x + robot_radius > w \
            or y - robot_radius < 0.0 or y + robot_radius > h:
        return True
    return any(_polygon_distance(poly, x, y) <= robot_radius for poly in world.obstacles)


def collides_batch(world: World, points: np.ndarray, robot_radius: float) -> np.ndarray:
    """Vectorized collides() over an (N, 2) array of positions."""
    if robot_radius <= 0.0:
        raise ValueError("robot_radius must be positive")
    pts = np.asarray(points, dtype=float)
    w, h = world.bounds
    out = (pts[:, 0] - robot_radius < 0.0) | (pts[:, 0] + robot_radius > w) \
        | (pts[:, 1] - robot_radius < 0.0) | (pts[:, 1] + robot_radius > h)
    for poly in world.obstacles:
        p1 = np.roll(poly, -1, axis=0)
        e = p1 - poly
        wx = pts[:, 0][:, None] - poly[None, :, 0]
        wy = pts[:, 1][:, None] - poly[None, :, 1]
        cross = e[None, :, 0] * wy - e[None, :, 1] * wx
        inside = np.all(cross >= 0.0, axis=1)
        ee = np.sum(e * e, axis=1)
        t = np.clip((wx * e[None, :, 0] + wy * e[None, :, 1]) / ee[None, :], 0.0, 1.0)
        dx = wx - t * e[None, :, 0]
        dy = wy - t * e[None, :, 1]
        dist = np.sqrt(np.min(dx * dx + dy * dy, axis=1))
        out |= inside | (dist <= robot_radius)
    return out
