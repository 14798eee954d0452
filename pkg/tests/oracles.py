"""Independent geometric oracles shared by the mapping tests.

Everything here is deliberately written from scratch against the textbook
definitions rather than calling back into the package geometry helpers.
"""

from __future__ import annotations

import math

import numpy as np


def clip_polygon_to_halfplane(poly: list, axis: int, bound: float, keep_below: bool) -> list:
    """Sutherland-Hodgman clip of a polygon against one axis-aligned half-plane."""
    out: list = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        a_in = (a[axis] <= bound) if keep_below else (a[axis] >= bound)
        b_in = (b[axis] <= bound) if keep_below else (b[axis] >= bound)
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (bound - a[axis]) / (b[axis] - a[axis])
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return out


def polygon_rect_overlap_area(poly: np.ndarray, x0: float, y0: float,
                              x1: float, y1: float) -> float:
    pts = [tuple(p) for p in poly]
    for axis, bound, keep_below in ((0, x1, True), (0, x0, False),
                                    (1, y1, True), (1, y0, False)):
        pts = clip_polygon_to_halfplane(pts, axis, bound, keep_below)
        if len(pts) < 3:
            return 0.0
    area = 0.0
    for i in range(len(pts)):
        xa, ya = pts[i]
        xb, yb = pts[(i + 1) % len(pts)]
        area += xa * yb - xb * ya
    return abs(area) / 2.0


def rasterize_wall_cells(world, resolution: float, width: int, height: int) -> np.ndarray:
    """Ground-truth occupancy: a cell is occupied iff it overlaps obstacle
    material (positive area) or sits on the world boundary ring where the
    walls are."""
    assert abs(width * resolution - world.bounds[0]) < 1e-6
    assert abs(height * resolution - world.bounds[1]) < 1e-6
    occ = np.zeros((height, width), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    for iy in range(height):
        for ix in range(width):
            if occ[iy, ix]:
                continue
            x0, y0 = ix * resolution, iy * resolution
            occ[iy, ix] = any(
                polygon_rect_overlap_area(p, x0, y0, x0 + resolution, y0 + resolution) > 1e-12
                for p in world.obstacles)
    return occ


def mapping_agreement(grid, world) -> tuple[float, int]:
    """Fraction of observed cells whose class matches the rasterization oracle."""
    truth_occ = rasterize_wall_cells(world, grid.resolution, grid.width, grid.height)
    observed = grid.observed
    mapped_occ = grid.occupied_mask()
    agree = (mapped_occ == truth_occ) & observed
    n_observed = int(observed.sum())
    return float(agree.sum()) / n_observed, n_observed


def lattice_scan_poses(world, nx: int, ny: int, n_headings: int,
                       margin: float = 0.5) -> list[tuple[float, float, float]]:
    """Known poses on an interior lattice with evenly spread headings."""
    w, h = world.bounds
    xs = np.linspace(margin, w - margin, nx)
    ys = np.linspace(margin, h - margin, ny)
    poses = []
    for y in ys:
        for x in xs:
            for k in range(n_headings):
                poses.append((float(x), float(y), -math.pi + (k + 0.5) * 2 * math.pi / n_headings))
    return poses
