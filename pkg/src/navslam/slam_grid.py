"""Occupancy-grid mapping with known poses.

The grid stores one log-odds value per cell so that Bayesian updates are
additive.  Cells are classified against a fixed probability threshold:

- Occupied:  p > occupied_threshold (default 0.65)
- Unknown:   never touched by any beam
- Free:      otherwise

A scalar confidence (geometric mean of per-cell certainty, or the literal
product) summarizes how settled a set of cells is; it gates snapshot
publication and weights the map-dependent reward term.
"""

from __future__ import annotations

import datetime
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .storage import atomic_write_text
from .world import LIDAR_MAX_RANGE_M, LIDAR_FOV_RAD, World

DEFAULT_RESOLUTION_M = 0.05
DEFAULT_L_OCC = 0.85
DEFAULT_L_FREE = -0.4
DEFAULT_L_MAX = 10.0
OCCUPIED_THRESHOLD = 0.65
PUBLISH_THRESHOLD = 0.25

GRID_FORMAT_VERSION = 1


class CellClass(enum.Enum):
    FREE = "free"
    OCCUPIED = "occupied"
    UNKNOWN = "unknown"


def probability_to_log_odds(p: float | np.ndarray) -> float | np.ndarray:
    return np.log(p / (1.0 - p))


def log_odds_to_probability(l: float | np.ndarray) -> float | np.ndarray:
    return 1.0 / (1.0 + np.exp(-l))


@dataclass
class OccupancyGrid:
    """Row-major grid of log-odds; cell (ix, iy) covers
    [origin + ix*res, origin + (ix+1)*res) x [..iy..).

    The far boundary of the covered rectangle belongs to the last cell so
    that beam endpoints landing exactly on the outer wall are attributed to
    an interior cell.
    """

    resolution: float
    origin: tuple[float, float]
    width: int
    height: int
    l_occ: float = DEFAULT_L_OCC
    l_free: float = DEFAULT_L_FREE
    l_max: float = DEFAULT_L_MAX
    occupied_threshold: float = OCCUPIED_THRESHOLD
    log_odds: np.ndarray = field(default=None, repr=False)
    observed: np.ndarray = field(default=None, repr=False)
    update_counter: int = 0
    _dist_field: np.ndarray | None = field(default=None, repr=False, compare=False)
    _dist_dirty: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.log_odds is None:
            self.log_odds = np.zeros((self.height, self.width))
        if self.observed is None:
            self.observed = np.zeros((self.height, self.width), dtype=bool)

    @classmethod
    def for_world(cls, world: World, resolution: float = DEFAULT_RESOLUTION_M, **kw) -> "OccupancyGrid":
        w, h = world.bounds
        return cls(resolution=resolution, origin=(0.0, 0.0),
                   width=int(math.ceil(w / resolution - 1e-9)),
                   height=int(math.ceil(h / resolution - 1e-9)), **kw)

    # ------------------------------------------------------------- geometry

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        xr = (x - self.origin[0]) / self.resolution
        yr = (y - self.origin[1]) / self.resolution
        ix, iy = int(math.floor(xr)), int(math.floor(yr))
        if ix == self.width and abs(xr - self.width) < 1e-9:
            ix -= 1  # far boundary belongs to the last cell
        if iy == self.height and abs(yr - self.height) < 1e-9:
            iy -= 1
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def contains(self, x: float, y: float) -> bool:
        ix, iy = self.world_to_cell(x, y)
        return self.in_grid(ix, iy)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays (H, W) of world x and y coordinates of every cell center."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.broadcast_to(xs, (self.height, self.width)), \
            np.broadcast_to(ys[:, None], (self.height, self.width))

    # -------------------------------------------------------- cell semantics

    def probabilities(self) -> np.ndarray:
        return log_odds_to_probability(self.log_odds)

    def occupied_mask(self) -> np.ndarray:
        return self.observed & (self.probabilities() > self.occupied_threshold)

    def free_mask(self) -> np.ndarray:
        return self.observed & ~(self.probabilities() > self.occupied_threshold)

    def classify(self, ix: int, iy: int) -> CellClass:
        if not self.in_grid(ix, iy):
            raise IndexError(f"cell ({ix}, {iy}) outside grid")
        if not self.observed[iy, ix]:
            return CellClass.UNKNOWN
        p = log_odds_to_probability(self.log_odds[iy, ix])
        return CellClass.OCCUPIED if p > self.occupied_threshold else CellClass.FREE

    def certainties(self) -> np.ndarray:
        """Per-cell certainty max(p, 1-p); unknown cells contribute 0.5."""
        p = self.probabilities()
        return np.where(self.observed, np.maximum(p, 1.0 - p), 0.5)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(
            resolution=self.resolution, origin=self.origin,
            width=self.width, height=self.height,
            l_occ=self.l_occ, l_free=self.l_free, l_max=self.l_max,
            occupied_threshold=self.occupied_threshold,
            log_odds=self.log_odds.copy(), observed=self.observed.copy(),
            update_counter=self.update_counter)

    def distance_field(self) -> np.ndarray | None:
        """Meters from each cell center to the nearest occupied cell, or None
        when nothing is occupied yet.  Cached until the occupied set changes."""
        if self._dist_dirty:
            occ = self.occupied_mask()
            if occ.any():
                self._dist_field = ndimage.distance_transform_edt(
                    ~occ, sampling=self.resolution)
            else:
                self._dist_field = None
            self._dist_dirty = False
        return self._dist_field


# -------------------------------------------------------------- integration

def bresenham(ix0: int, iy0: int, ix1: int, iy1: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer cells of the discrete line from (ix0, iy0) to (ix1, iy1), inclusive."""
    xs, ys = [], []
    dx, dy = abs(ix1 - ix0), abs(iy1 - iy0)
    sx = 1 if ix0 < ix1 else -1
    sy = 1 if iy0 < iy1 else -1
    err = dx - dy
    x, y = ix0, iy0
    while True:
        xs.append(x)
        ys.append(y)
        if x == ix1 and y == iy1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return np.array(xs, dtype=int), np.array(ys, dtype=int)


def integrate_scan(grid: OccupancyGrid, pose: tuple[float, float, float], scan) -> OccupancyGrid:
    """Fold one scan taken at a known pose into the grid.

    Cells traversed by each beam (discrete line, sampled at half-resolution
    steps) get the free decrement once per beam; the endpoint cell gets the
    occupied increment only for returns strictly inside the sensor window
    (a max-range return marks no endpoint).  Log-odds are clamped to
    [-l_max, +l_max].
    """
    x, y, heading = pose
    ix0, iy0 = grid.world_to_cell(x, y)
    if not grid.in_grid(ix0, iy0):
        raise ValueError(f"pose ({x:.3f}, {y:.3f}) outside grid extent")

    n_beams = len(scan.ranges)
    angles = heading + scan.bearings
    cos_a, sin_a = np.cos(angles), np.sin(angles)
    ex = x + scan.ranges * cos_a
    ey = y + scan.ranges * sin_a
    hits = scan.ranges < LIDAR_MAX_RANGE_M - 1e-9
    res = grid.resolution

    # endpoint cells; boundary-exact returns are attributed to the material
    # side of the surface, probed just beyond the hit
    end_ix = np.floor((ex - grid.origin[0]) / res).astype(int)
    end_iy = np.floor((ey - grid.origin[1]) / res).astype(int)
    for b in range(n_beams):
        cx, cy = grid.world_to_cell(float(ex[b]), float(ey[b]))
        if hits[b]:
            px, py = grid.world_to_cell(float(ex[b] + 1e-6 * cos_a[b]),
                                        float(ey[b] + 1e-6 * sin_a[b]))
            if grid.in_grid(px, py):
                cx, cy = px, py
        end_ix[b], end_iy[b] = cx, cy
    end_flat = end_iy * grid.width + end_ix
    end_in = (end_ix >= 0) & (end_ix < grid.width) & (end_iy >= 0) & (end_iy < grid.height)

    # traversed cells, sampled along every beam at half-resolution spacing
    step = res / 2.0
    n_samples = max(int(math.ceil(float(np.max(scan.ranges)) / step)), 1)
    t = (np.arange(n_samples) + 0.5) * step                       # (S,)
    before_end = t[None, :] < scan.ranges[:, None]                # (B, S)
    sx = np.floor((x + t[None, :] * cos_a[:, None] - grid.origin[0]) / res).astype(int)
    sy = np.floor((y + t[None, :] * sin_a[:, None] - grid.origin[1]) / res).astype(int)
    in_grid = (sx >= 0) & (sx < grid.width) & (sy >= 0) & (sy < grid.height)
    flat = sy * grid.width + sx
    valid = before_end & in_grid & (flat != end_flat[:, None])
    # each beam decrements a traversed cell once: drop consecutive duplicates
    # within a beam (a ray never re-enters a cell)
    beam_ids = np.broadcast_to(np.arange(n_beams)[:, None], flat.shape)
    flat_v = flat.ravel()[valid.ravel()]
    beam_v = beam_ids.ravel()[valid.ravel()]
    if len(flat_v):
        first = np.ones(len(flat_v), dtype=bool)
        first[1:] = (flat_v[1:] != flat_v[:-1]) | (beam_v[1:] != beam_v[:-1])
        free_flat = flat_v[first]
    else:
        free_flat = flat_v

    touched_before = grid.log_odds.ravel()[np.concatenate([free_flat, end_flat[end_in]])]
    occ_thresh_l = probability_to_log_odds(grid.occupied_threshold)

    lo = grid.log_odds.ravel()
    obs = grid.observed.ravel()
    np.add.at(lo, free_flat, grid.l_free)
    obs[free_flat] = True
    occ_sel = end_flat[hits & end_in]
    np.add.at(lo, occ_sel, grid.l_occ)
    obs[occ_sel] = True
    touched = np.concatenate([free_flat, end_flat[end_in]])
    lo[touched] = np.clip(lo[touched], -grid.l_max, grid.l_max)

    grid.update_counter += 1
    if np.any((lo[touched] > occ_thresh_l) != (touched_before > occ_thresh_l)):
        grid._dist_dirty = True
    return grid


# -------------------------------------------------------------- confidence

def map_posterior_confidence(grid: OccupancyGrid,
                             cells: tuple[np.ndarray, np.ndarray] | None = None,
                             mode: str = "geometric") -> float:
    """Scalar confidence over a cell set (row, col index arrays).

    ``geometric`` takes the geometric mean of per-cell certainties so the
    value stays in [0.5, 1] regardless of how many cells are involved;
    ``product`` multiplies the certainties literally, which underflows toward
    0 on large sets.  cells=None means every cell in the grid.
    """
    cert = grid.certainties()
    if cells is None:
        values = cert.ravel()
    else:
        rows, cols = cells
        values = cert[np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)]
    if values.size == 0:
        raise ValueError("confidence needs a nonempty cell set")
    logs = np.log(values)
    if mode == "geometric":
        return float(np.exp(np.mean(logs)))
    if mode == "product":
        return float(np.exp(np.sum(logs)))
    raise ValueError(f"unknown confidence mode {mode!r}")


def cells_in_fov(grid: OccupancyGrid, pose: tuple[float, float, float],
                 fov: float = LIDAR_FOV_RAD,
                 range_m: float = LIDAR_MAX_RANGE_M) -> tuple[np.ndarray, np.ndarray]:
    """Row/col indices of cells whose centers lie in the forward half-disc."""
    x, y, heading = pose
    cx, cy = grid.cell_centers()
    dx, dy = cx - x, cy - y
    dist = np.hypot(dx, dy)
    ahead = dx * math.cos(heading) + dy * math.sin(heading) >= 0.0
    mask = (dist <= range_m) & ahead
    rows, cols = np.nonzero(mask)
    return rows, cols


def occupied_cells_in_fov(grid: OccupancyGrid, pose: tuple[float, float, float],
                          fov: float = LIDAR_FOV_RAD,
                          range_m: float = LIDAR_MAX_RANGE_M) -> list[tuple[tuple[int, int], float]]:
    """Occupied-classified cells in the forward half-disc with center distances.

    Returns [((ix, iy), distance_m), ...]; the list length is the k of the
    map-dependent reward term.
    """
    rows, cols, dists = occupied_fov_distances(grid, pose, range_m)
    return [((int(c), int(r)), float(d)) for r, c, d in zip(rows, cols, dists)]


def occupied_fov_distances(grid: OccupancyGrid, pose: tuple[float, float, float],
                           range_m: float = LIDAR_MAX_RANGE_M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Array form of occupied_cells_in_fov: (rows, cols, distances)."""
    x, y, heading = pose
    cx, cy = grid.cell_centers()
    dx, dy = cx - x, cy - y
    dist = np.hypot(dx, dy)
    mask = (dist <= range_m) \
        & (dx * math.cos(heading) + dy * math.sin(heading) >= 0.0) \
        & grid.occupied_mask()
    rows, cols = np.nonzero(mask)
    return rows, cols, dist[rows, cols]


def should_publish(last_published_confidence: float, current_confidence: float,
                   threshold: float = PUBLISH_THRESHOLD) -> bool:
    """Gate map snapshot publication on a confidence change of at least threshold."""
    for name, c in (("last_published", last_published_confidence),
                    ("current", current_confidence)):
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"{name} confidence {c} outside [0, 1]")
    return abs(current_confidence - last_published_confidence) >= threshold


# ------------------------------------------------------------------ file I/O

def save_grid(grid: OccupancyGrid, path: str | Path) -> None:
    """Write the grid as a portable text raster plus a JSON metadata sidecar.

    The raster holds one probability per cell, row-major; never-observed
    cells are written as exactly 0.5 and read back as unknown.
    """
    path = Path(path)
    probs = np.where(grid.observed, grid.probabilities(), 0.5)
    lines = [f"navgrid {GRID_FORMAT_VERSION}", f"{grid.width} {grid.height}"]
    lines += [" ".join(format(v, ".17g") for v in row) for row in probs]
    atomic_write_text(path, "\n".join(lines) + "\n")
    meta = {
        "format": GRID_FORMAT_VERSION,
        "resolution": grid.resolution,
        "origin": list(grid.origin),
        "width": grid.width,
        "height": grid.height,
        "occupied_threshold": grid.occupied_threshold,
        "update_counter": grid.update_counter,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    atomic_write_text(path.with_suffix(path.suffix + ".meta.json"),
                      json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_grid(path: str | Path) -> OccupancyGrid:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
    if meta.get("format") != GRID_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported grid format {meta.get('format')}")
    lines = path.read_text().splitlines()
    tag, version = lines[0].split()
    if tag != "navgrid" or int(version) != GRID_FORMAT_VERSION:
        raise ValueError(f"{path}: bad raster header {lines[0]!r}")
    width, height = (int(t) for t in lines[1].split())
    probs = np.array([[float(t) for t in line.split()] for line in lines[2 : 2 + height]])
    if probs.shape != (height, width):
        raise ValueError(f"{path}: raster shape {probs.shape} != ({height}, {width})")
    observed = probs != 0.5
    log_odds = np.zeros_like(probs)
    log_odds[observed] = probability_to_log_odds(probs[observed])
    grid = OccupancyGrid(
        resolution=float(meta["resolution"]), origin=tuple(meta["origin"]),
        width=width, height=height,
        occupied_threshold=float(meta.get("occupied_threshold", OCCUPIED_THRESHOLD)),
        log_odds=log_odds, observed=observed,
        update_counter=int(meta.get("update_counter", 0)))
    return grid
