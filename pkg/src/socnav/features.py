"""Fixed-size observation vector assembled from the robot's sensors.

Layout (34 values):

  [0:4]    subgoal pose relative to the robot: x, y, sin(dtheta), cos(dtheta)
  [4:6]    previous executed action (v, omega)
  [6:14]   8 lidar range readings at evenly spaced bearings, normalized to
           [0, 1]; tall structure only
  [14:22]  8 short-range readings from the bumper-height ring at the same
           bearings, normalized; this is the only block that sees the low
           debris the lidar (and the planning cloud built from it) misses
  [22:34]  3 nearest pedestrians as (rel x, rel y, vel x, vel y) in the robot
           frame, sorted by distance, zero-padded when fewer are present

The goal block comes from the localization estimate when one is supplied (the
robot only ever knows its estimated pose); ranges and pedestrian readings are
physical sensor values and therefore use the true pose.
"""

from __future__ import annotations

import numpy as np

from .geometry import Pose2, Transform2, relative_pose
from .world import WorldState, nearby_pedestrians

N_FEATURE_RAYS = 8
N_LOW_RAYS = 8
N_PED_SLOTS = 3
FEATURE_DIM = 4 + 2 + N_FEATURE_RAYS + N_LOW_RAYS + 4 * N_PED_SLOTS
FEATURE_RAY_RANGE = 5.0
LOW_RAY_RANGE = 2.5


def goal_relative_block(robot_pose: Pose2, goal_pose: Pose2) -> np.ndarray:
    rel = relative_pose(robot_pose, goal_pose)
    return np.array([rel.x, rel.y, np.sin(rel.theta), np.cos(rel.theta)])


def extract_features(
    world: WorldState,
    goal_pose: Pose2,
    prev_action,
    estimated_pose: Pose2 | None = None,
    ray_range: float = FEATURE_RAY_RANGE,
) -> np.ndarray:
    """Build the observation vector for the current world configuration."""
    base = estimated_pose if estimated_pose is not None else world.robot
    out = np.empty(FEATURE_DIM)
    out[0:4] = goal_relative_block(base, goal_pose)
    out[4:6] = np.asarray(prev_action, dtype=float).reshape(2)
    out[6 : 6 + N_FEATURE_RAYS] = world.sense_rays(N_FEATURE_RAYS, ray_range) / ray_range
    lo = 6 + N_FEATURE_RAYS
    out[lo : lo + N_LOW_RAYS] = world.sense_low_rays(N_LOW_RAYS, LOW_RAY_RANGE) / LOW_RAY_RANGE

    ped_pos, ped_vel, mask = nearby_pedestrians(world, N_PED_SLOTS)
    to_robot = Transform2.from_pose(world.robot).inverse()
    rot = to_robot.matrix()
    offset = lo + N_LOW_RAYS
    for slot in range(N_PED_SLOTS):
        if mask[slot]:
            rel = to_robot.apply(ped_pos[slot])
            vel = rot @ ped_vel[slot]
            out[offset : offset + 2] = rel
            out[offset + 2 : offset + 4] = vel
        else:
            out[offset : offset + 4] = 0.0
        offset += 4
    return out


def scene_for_objective(
    world: WorldState,
    goal_pose: Pose2,
    prev_action,
    estimated_pose: Pose2 | None = None,
    n_cloud_rays: int = 64,
    cloud_range: float = 5.0,
):
    """Everything the trajectory score needs, expressed in the robot frame.

    Returns a dict with goal (3,), cloud (n_cloud_rays, 2), ped_pos/ped_vel
    (N_PED_SLOTS, 2), ped_mask (N_PED_SLOTS,), prev_action (2,).  The cloud
    comes from the large-structure estimator (world.cloud) and the goal from
    the pose estimate, mirroring what the real stack would know.
    """
    base = estimated_pose if estimated_pose is not None else world.robot
    goal_rel = relative_pose(base, goal_pose)

    to_robot = Transform2.from_pose(world.robot).inverse()
    cloud_world = world.cloud(n_cloud_rays, cloud_range)
    cloud = to_robot.apply(cloud_world)

    ped_pos, ped_vel, mask = nearby_pedestrians(world, N_PED_SLOTS)
    rot = to_robot.matrix()
    rel_pos = to_robot.apply(ped_pos)
    rel_vel = ped_vel @ rot.T
    rel_pos[~mask] = 0.0
    rel_vel[~mask] = 0.0

    return {
        "goal": goal_rel.as_array(),
        "cloud": cloud,
        "ped_pos": rel_pos,
        "ped_vel": rel_vel,
        "ped_mask": mask,
        "prev_action": np.asarray(prev_action, dtype=float).reshape(2),
    }
