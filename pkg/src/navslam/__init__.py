"""navslam: 2D differential-drive navigation stack.

Simulator (world geometry, lidar, kinematics), grid SLAM (particle filter
plus occupancy mapping), a DDPG planner, reward functions including a
map-shaped variant, and a benchmark harness comparing the two rewards in
seen and unseen environments.
"""

__version__ = "0.1.0"
