"""The scalar training reward.

Progress toward the subgoal plus flat penalties for the events the onboard
sensors can actually detect: contact, rough ground, and personal-space
violations.  This is the signal the critic learns from, so it deliberately
covers what the differentiable trajectory score cannot see.

The function takes the robot's *estimated* pose, never the simulator's ground
truth: on a real platform this is all the reward computer would have.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, relative_pose
from .world import EventFlags, PERSONAL_DISTANCE


@dataclass(frozen=True)
class RewardConstants:
    collision_penalty: float = 0.3
    bumpy_penalty: float = 0.3
    proximity_penalty: float = 0.1
    personal_distance: float = PERSONAL_DISTANCE
    # weight on the turn-toward-goal term; the bearing is normalized by pi so
    # the whole velocity projection stays within [-0.6, 0.6] and the flat
    # penalties stay material
    heading_weight: float = 0.1


DEFAULT_CONSTANTS = RewardConstants()


def compute_reward(
    est_pose: Pose2,
    goal_pose: Pose2,
    action,
    flags: EventFlags,
    constants: RewardConstants = DEFAULT_CONSTANTS,
) -> float:
    """r = v·(unit goal direction) + heading shaping + event penalties.

    The projection term rewards velocity toward the subgoal; the heading term
    rewards angular velocity that turns toward it.  Collision beats bumpy
    (a robot grinding a wall on a rough patch is penalized once).
    """
    action = np.asarray(action, dtype=float).reshape(2)
    v, omega = float(action[0]), float(action[1])

    rel = relative_pose(est_pose, goal_pose)
    distance = float(np.hypot(rel.x, rel.y))
    if distance > 1e-9:
        progress = v * rel.x / distance
        bearing = float(np.arctan2(rel.y, rel.x))
    else:
        progress = 0.0
        bearing = 0.0
    shaping = constants.heading_weight * omega * bearing / np.pi

    if flags.collision:
        event = -constants.collision_penalty
    elif flags.bumpy:
        event = -constants.bumpy_penalty
    else:
        event = 0.0

    social = -constants.proximity_penalty if flags.d_h < constants.personal_distance else 0.0
    return progress + shaping + event + social
