import numpy as np
import pytest

from navslam.world import World, resolve_world


@pytest.fixture
def empty_room() -> World:
    """Obstacle-free 3 x 3 m room."""
    return World(bounds=(3.0, 3.0), obstacles=[], name="empty-room")


@pytest.fixture
def big_empty_world() -> World:
    """Large world where a 2 m lidar never reaches a wall from the center."""
    return World(bounds=(20.0, 20.0), obstacles=[], name="big-empty")


@pytest.fixture
def box_room() -> World:
    """3 x 3 m room with one interior box obstacle."""
    box = np.array([[1.2, 1.2], [1.8, 1.2], [1.8, 1.8], [1.2, 1.8]])
    return World(bounds=(3.0, 3.0), obstacles=[box], name="box-room")


@pytest.fixture
def env1() -> World:
    return resolve_world("env1")


@pytest.fixture
def desk_train() -> World:
    return resolve_world("desk-train")


@pytest.fixture
def desk_unseen() -> World:
    return resolve_world("desk-unseen")
