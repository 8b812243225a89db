"""Sampling-based planning over fixed constant-twist primitives.

Fifteen (v, omega) pairs are each rolled out for the full control horizon;
a primitive is scored by its best squared pose error to the subgoal and
knocked out entirely by a large constant if it gets too close to the static
cloud or to any predicted pedestrian position.  The cheapest surviving
primitive's twist is executed for one step and the whole thing reruns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, unicycle_step, wrap_angle
from .objective import DT, HORIZON, PERSONAL_DISTANCE, ROBOT_RADIUS

PRIMITIVES = np.array(
    [
        (0.0, 0.0),
        (0.2, 0.0),
        (0.2, 0.3),
        (0.2, 0.6),
        (0.2, 0.9),
        (0.2, -0.3),
        (0.2, -0.6),
        (0.2, -0.9),
        (0.5, 0.0),
        (0.5, 0.3),
        (0.5, 0.6),
        (0.5, 0.9),
        (0.5, -0.3),
        (0.5, -0.6),
        (0.5, -0.9),
    ]
)

FILTER_COST = 1000.0
HEADING_WEIGHT = 0.3  # same mixed-units weight as the trajectory score's pose term


def _pose_table() -> np.ndarray:
    """(15, HORIZON, 3) poses per primitive, chained through the shared kinematics."""
    table = np.zeros((len(PRIMITIVES), HORIZON, 3))
    for j, (v, omega) in enumerate(PRIMITIVES):
        pose = Pose2(0.0, 0.0, 0.0)
        for i in range(HORIZON):
            pose = unicycle_step(pose, v, omega, DT)
            table[j, i] = pose.as_array()
    return table


POSE_TABLE = _pose_table()


@dataclass
class PlanDecision:
    action: np.ndarray  # (v, omega) of the chosen primitive
    index: int
    costs: np.ndarray  # (15,)
    boxed_in: bool


def predict_pedestrians(ped_pos, ped_vel, ped_mask) -> np.ndarray:
    """Constant-velocity forecasts, synchronized with the primitive poses.

    Returns (P_active, HORIZON, 2); masked slots are dropped.
    """
    pos = np.asarray(ped_pos, dtype=float).reshape(-1, 2)
    vel = np.asarray(ped_vel, dtype=float).reshape(-1, 2)
    mask = np.asarray(ped_mask, dtype=bool).reshape(-1)
    pos, vel = pos[mask], vel[mask]
    steps = DT * np.arange(1, HORIZON + 1)
    return pos[:, None, :] + vel[:, None, :] * steps[:, None]


def score_primitives(goal_rel, cloud=None, ped_pos=None, ped_vel=None, ped_mask=None) -> np.ndarray:
    """Cost of all 15 primitives for the robot-frame scene; lower is better."""
    goal = np.asarray(goal_rel, dtype=float).reshape(3)

    err_xy = POSE_TABLE[:, :, :2] - goal[:2]
    err_th = wrap_angle(POSE_TABLE[:, :, 2] - goal[2])
    goal_term = np.min(np.sum(err_xy**2, axis=-1) + HEADING_WEIGHT * err_th**2, axis=-1)
    # the knockout constant must dominate any reachable goal error
    assert np.all(goal_term < FILTER_COST), "scene larger than the filter constant"
    costs = goal_term.copy()

    if cloud is not None and len(cloud) > 0:
        pts = np.asarray(cloud, dtype=float).reshape(-1, 2)
        d = np.linalg.norm(POSE_TABLE[:, :, None, :2] - pts[None, None], axis=-1)
        d_s = d.min(axis=(1, 2))
        costs[d_s < ROBOT_RADIUS] += FILTER_COST

    if ped_pos is not None:
        predicted = predict_pedestrians(ped_pos, ped_vel, ped_mask)
        if len(predicted) > 0:
            d = np.linalg.norm(POSE_TABLE[None, :, :, :2] - predicted[:, None], axis=-1)
            d_ped = d.min(axis=(0, 2))
            costs[d_ped < PERSONAL_DISTANCE] += FILTER_COST

    return costs


def select_action(goal_rel, cloud=None, ped_pos=None, ped_vel=None, ped_mask=None) -> PlanDecision:
    """Cheapest surviving primitive; ties go to the lower index.

    When every primitive is knocked out the planner admits it is boxed in and
    stops rather than picking the least-bad collision.
    """
    costs = score_primitives(goal_rel, cloud, ped_pos, ped_vel, ped_mask)
    if np.min(costs) >= FILTER_COST:
        return PlanDecision(action=np.zeros(2), index=0, costs=costs, boxed_in=True)
    index = int(np.argmin(costs))
    return PlanDecision(action=PRIMITIVES[index].copy(), index=index, costs=costs, boxed_in=False)


def plan_from_scene(scene: dict) -> PlanDecision:
    """Adapter from the feature extractor's scene dict."""
    return select_action(
        scene["goal"],
        scene["cloud"],
        scene["ped_pos"],
        scene["ped_vel"],
        scene["ped_mask"],
    )
