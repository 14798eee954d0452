import math

import numpy as np
import pytest

from navslam.slam_grid import (CellClass, OccupancyGrid, bresenham, cells_in_fov,
                               integrate_scan, load_grid, log_odds_to_probability,
                               map_posterior_confidence, occupied_cells_in_fov,
                               probability_to_log_odds, save_grid, should_publish)
from navslam.world import scan
from oracles import lattice_scan_poses, mapping_agreement


def make_grid(width=60, height=60, resolution=0.05, **kw) -> OccupancyGrid:
    return OccupancyGrid(resolution=resolution, origin=(0.0, 0.0),
                         width=width, height=height, **kw)


def test_log_odds_probability_round_trip():
    p = np.linspace(0.001, 0.999, 997)
    back = log_odds_to_probability(probability_to_log_odds(p))
    assert np.max(np.abs(back - p)) < 1e-12


def test_grid_for_world_covers_bounds(box_room):
    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    assert (grid.width, grid.height) == (60, 60)
    assert grid.world_to_cell(0.0, 0.0) == (0, 0)
    # far boundary belongs to the last cell
    assert grid.world_to_cell(3.0, 3.0) == (59, 59)


def test_single_beam_update_directions(box_room):
    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    s = scan(box_room, (0.4, 1.5, 0.0))  # obstacle face at x=1.2, 0.8 m ahead
    integrate_scan(grid, (0.4, 1.5, 0.0), s)
    hit_cell = grid.world_to_cell(1.21, 1.5)   # first cell inside the obstacle face
    mid_cell = grid.world_to_cell(0.81, 1.5)   # on the beam, well before the face
    probs = grid.probabilities()
    assert probs[hit_cell[1], hit_cell[0]] > 0.5
    assert probs[mid_cell[1], mid_cell[0]] < 0.5
    assert grid.update_counter == 1


def test_max_range_beam_marks_no_endpoint(big_empty_world):
    grid = OccupancyGrid.for_world(big_empty_world, resolution=0.05)
    s = scan(big_empty_world, (10.0, 10.0, 0.0))
    assert np.all(s.ranges == 2.0)
    integrate_scan(grid, (10.0, 10.0, 0.0), s)
    assert not grid.occupied_mask().any()
    assert grid.free_mask().any()


def test_pose_outside_grid_rejected(box_room):
    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    s = scan(box_room, (0.4, 1.5, 0.0))
    with pytest.raises(ValueError, match="outside grid"):
        integrate_scan(grid, (5.0, 1.5, 0.0), s)


def test_scan_order_insensitive_without_clamp(box_room):
    poses = [(0.4, 1.5, 0.0), (1.5, 0.4, math.pi / 2), (2.6, 1.5, math.pi),
             (1.5, 2.6, -math.pi / 2), (0.5, 0.5, 0.8)]
    scans = [(p, scan(box_room, p)) for p in poses]
    g1 = OccupancyGrid.for_world(box_room, resolution=0.05, l_max=math.inf)
    g2 = OccupancyGrid.for_world(box_room, resolution=0.05, l_max=math.inf)
    for p, s in scans:
        integrate_scan(g1, p, s)
    for p, s in reversed(scans):
        integrate_scan(g2, p, s)
    assert np.max(np.abs(g1.log_odds - g2.log_odds)) < 1e-12
    assert np.array_equal(g1.observed, g2.observed)


def test_classification_thresholds():
    grid = make_grid(4, 4)
    grid.observed[0, 0] = True
    grid.log_odds[0, 0] = probability_to_log_odds(0.66)
    grid.observed[0, 1] = True
    grid.log_odds[0, 1] = probability_to_log_odds(0.65)  # not strictly above
    assert grid.classify(0, 0) is CellClass.OCCUPIED
    assert grid.classify(1, 0) is CellClass.FREE
    assert grid.classify(2, 0) is CellClass.UNKNOWN


# ------------------------------------------------------------------ confidence

def test_confidence_all_unknown_is_half():
    grid = make_grid(10, 10)
    assert map_posterior_confidence(grid) == pytest.approx(0.5, abs=1e-15)


def test_confidence_hand_value_geometric_mean():
    # two cells with certainties 0.64 and 1.0 -> sqrt(0.64 * 1.0) = 0.8
    grid = make_grid(2, 1, l_max=50.0)
    grid.observed[0, :] = True
    grid.log_odds[0, 0] = probability_to_log_odds(0.64)
    grid.log_odds[0, 1] = 50.0  # p rounds to 1.0 in float64
    conf = map_posterior_confidence(grid, (np.array([0, 0]), np.array([0, 1])))
    assert conf == pytest.approx(0.8, abs=1e-12)


def test_confidence_product_mode_multiplies():
    grid = make_grid(3, 1)
    grid.observed[0, :] = True
    grid.log_odds[0, :] = probability_to_log_odds(0.9)
    cells = (np.zeros(3, dtype=int), np.arange(3))
    geo = map_posterior_confidence(grid, cells, mode="geometric")
    prod = map_posterior_confidence(grid, cells, mode="product")
    assert geo == pytest.approx(0.9, abs=1e-12)
    assert prod == pytest.approx(0.9 ** 3, abs=1e-12)


def test_confidence_near_one_when_fully_certain():
    grid = make_grid(8, 8, l_max=50.0)
    grid.observed[:] = True
    grid.log_odds[:] = 50.0
    assert map_posterior_confidence(grid) == pytest.approx(1.0, abs=1e-12)


def test_confidence_monotone_in_cell_certainty():
    grid = make_grid(4, 1)
    grid.observed[0, :] = True
    grid.log_odds[0, :] = probability_to_log_odds(0.7)
    cells = (np.zeros(4, dtype=int), np.arange(4))
    before = map_posterior_confidence(grid, cells)
    grid.log_odds[0, 2] = probability_to_log_odds(0.95)
    assert map_posterior_confidence(grid, cells) > before


def test_confidence_empty_cell_set_rejected():
    grid = make_grid(4, 4)
    with pytest.raises(ValueError, match="nonempty"):
        map_posterior_confidence(grid, (np.array([], dtype=int), np.array([], dtype=int)))


# ------------------------------------------------------------------------ FOV

def test_fov_empty_for_unknown_grid():
    grid = make_grid()
    assert occupied_cells_in_fov(grid, (1.5, 1.5, 0.0)) == []


def test_fov_excludes_cell_behind_robot():
    grid = make_grid()
    behind = grid.world_to_cell(1.0, 1.5)
    ahead = grid.world_to_cell(2.0, 1.5)
    for ix, iy in (behind, ahead):
        grid.observed[iy, ix] = True
        grid.log_odds[iy, ix] = 5.0
    cells = occupied_cells_in_fov(grid, (1.5, 1.5, 0.0))  # facing +x
    found = {c for c, _ in cells}
    assert ahead in found
    assert behind not in found


def test_fov_matches_exhaustive_enumeration(box_room):
    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    rng = np.random.default_rng(4)
    for pose in [(0.5, 0.5, 0.3), (2.5, 2.4, -2.0), (1.0, 2.0, 1.6)]:
        s = scan(box_room, pose)
        integrate_scan(grid, pose, s)
    pose = (0.6, 1.5, 0.2)
    got = {(c, round(d, 12)) for c, d in occupied_cells_in_fov(grid, pose)}
    # brute force over every cell: classification + half-disc membership
    want = set()
    probs = grid.probabilities()
    for iy in range(grid.height):
        for ix in range(grid.width):
            if not (grid.observed[iy, ix] and probs[iy, ix] > 0.65):
                continue
            cx, cy = grid.cell_center(ix, iy)
            dx, dy = cx - pose[0], cy - pose[1]
            d = math.hypot(dx, dy)
            if d <= 2.0 and dx * math.cos(pose[2]) + dy * math.sin(pose[2]) >= 0.0:
                want.add(((ix, iy), round(d, 12)))
    assert got == want
    assert len(got) > 0


def test_cells_in_fov_count_scales_with_range():
    grid = make_grid()
    few = cells_in_fov(grid, (1.5, 1.5, 0.0), range_m=0.5)
    many = cells_in_fov(grid, (1.5, 1.5, 0.0), range_m=2.0)
    assert len(many[0]) > len(few[0]) > 0


# ------------------------------------------------------------------ publishing

def test_should_publish_threshold_cases():
    assert not should_publish(0.5, 0.5)
    assert should_publish(0.5, 0.75)
    assert not should_publish(0.5, 0.74)
    assert should_publish(0.9, 0.5)
    with pytest.raises(ValueError):
        should_publish(1.2, 0.5)


# --------------------------------------------------------------------- mapping

def test_box_room_mapping_matches_rasterization_oracle(box_room):
    from navslam.world import is_free_origin

    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    poses = [p for p in lattice_scan_poses(box_room, 5, 5, 8)
             if is_free_origin(box_room, p[0], p[1])]
    assert len(poses) >= 190
    for pose in poses:
        integrate_scan(grid, pose, scan(box_room, pose))
    agreement, n_observed = mapping_agreement(grid, box_room)
    assert n_observed > 1000
    assert agreement >= 0.95


# ------------------------------------------------------------------- file I/O

def test_grid_save_load_round_trip(tmp_path, box_room):
    grid = OccupancyGrid.for_world(box_room, resolution=0.05)
    for pose in [(0.5, 0.5, 0.4), (2.5, 2.5, -2.4)]:
        integrate_scan(grid, pose, scan(box_room, pose))
    path = tmp_path / "map.grid"
    save_grid(grid, path)
    assert path.exists() and path.with_suffix(".grid.meta.json").exists()
    loaded = load_grid(path)
    assert (loaded.width, loaded.height) == (grid.width, grid.height)
    assert loaded.resolution == grid.resolution
    assert np.array_equal(loaded.occupied_mask(), grid.occupied_mask())
    # observedness survives except for observed cells at exactly p = 0.5
    ambiguous = grid.observed & (grid.log_odds == 0.0)
    assert np.array_equal(loaded.observed | ambiguous, grid.observed | ambiguous)
    p_old = np.where(grid.observed, grid.probabilities(), 0.5)
    p_new = np.where(loaded.observed, loaded.probabilities(), 0.5)
    assert np.max(np.abs(p_old - p_new)) < 1e-12


def test_bresenham_endpoints_and_connectivity():
    xs, ys = bresenham(0, 0, 5, 3)
    assert (xs[0], ys[0]) == (0, 0)
    assert (xs[-1], ys[-1]) == (5, 3)
    steps = np.maximum(np.abs(np.diff(xs)), np.abs(np.diff(ys)))
    assert np.all(steps == 1)
