import numpy as np
import pytest

from socnav.features import (
    FEATURE_DIM,
    N_FEATURE_RAYS,
    N_LOW_RAYS,
    N_PED_SLOTS,
    extract_features,
    scene_for_objective,
)
from socnav.geometry import ObstacleSet, Pose2
from socnav.world import Pedestrian, WorldState


def make_ped(x, y, vx=0.0, vy=0.0):
    return Pedestrian(
        position=np.array([x, y], dtype=float),
        velocity=np.array([vx, vy], dtype=float),
        waypoints=np.array([[x, y]], dtype=float),
    )


def test_dimension_and_layout():
    assert FEATURE_DIM == 34
    w = WorldState(robot=Pose2(0, 0, 0))
    f = extract_features(w, Pose2(0, 0, 0), (0.0, 0.0))
    assert f.shape == (FEATURE_DIM,)


def test_at_goal_block():
    w = WorldState(robot=Pose2(1.0, -2.0, 0.7))
    f = extract_features(w, Pose2(1.0, -2.0, 0.7), (0.0, 0.0))
    assert f[0:4] == pytest.approx([0.0, 0.0, 0.0, 1.0])
    # free space: every normalized ray saturates at 1.0, both rings
    assert f[6 : 6 + N_FEATURE_RAYS + N_LOW_RAYS] == pytest.approx(np.ones(N_FEATURE_RAYS + N_LOW_RAYS))
    # no pedestrians: all slots zero
    assert f[6 + N_FEATURE_RAYS + N_LOW_RAYS :] == pytest.approx(np.zeros(4 * N_PED_SLOTS))


def test_goal_straight_ahead():
    w = WorldState(robot=Pose2(3.0, 1.0, np.pi / 2))
    goal = Pose2(3.0, 3.0, np.pi / 2)
    f = extract_features(w, goal, (0.3, -0.1))
    assert f[0:4] == pytest.approx([2.0, 0.0, 0.0, 1.0])
    assert f[4:6] == pytest.approx([0.3, -0.1])


def test_goal_block_uses_estimated_pose():
    w = WorldState(robot=Pose2(0, 0, 0))
    goal = Pose2(2.0, 0.0, 0.0)
    # estimate half a meter behind the truth shifts the goal block, not rays
    est = Pose2(-0.5, 0.0, 0.0)
    f = extract_features(w, goal, (0.0, 0.0), estimated_pose=est)
    assert f[0] == pytest.approx(2.5)


def test_ray_rings_split_by_obstacle_height():
    # wall box ahead of the robot plus one low object in front of it
    box = ObstacleSet(
        polygons=[np.array([[4.0, -4.0], [4.2, -4.0], [4.2, 4.0], [4.0, 4.0]])]
    )
    w = WorldState(
        robot=Pose2(0, 0, 0),
        obstacles=box,
        small_objects=np.array([[2.0, 0.0, 0.15]]),
    )
    f = extract_features(w, Pose2(0, 0, 0), (0.0, 0.0))
    # lidar sees the wall, not the debris
    assert f[6] == pytest.approx(4.0 / 5.0)
    # the bumper ring sees the debris and nothing else
    assert f[6 + N_FEATURE_RAYS] == pytest.approx((2.0 - 0.15) / 2.5)
    # the planning cloud is blind to the same object: nothing nearer the wall
    scene = scene_for_objective(w, Pose2(3, 0, 0), (0.0, 0.0))
    nearest_cloud = np.min(np.linalg.norm(scene["cloud"], axis=-1))
    assert nearest_cloud == pytest.approx(4.0)


def test_pedestrian_slots_sorted_by_distance():
    peds = [make_ped(0, 3, 0.5, 0.0), make_ped(1, 0, 0.0, 0.2), make_ped(-2, 0)]
    w = WorldState(robot=Pose2(0, 0, 0), pedestrians=peds)
    f = extract_features(w, Pose2(0, 0, 0), (0.0, 0.0))
    base = 6 + N_FEATURE_RAYS + N_LOW_RAYS
    slots = f[base:].reshape(N_PED_SLOTS, 4)
    dists = np.linalg.norm(slots[:, :2], axis=-1)
    expected = sorted(np.linalg.norm(p.position, axis=-1) for p in peds)
    assert dists == pytest.approx(expected)
    # nearest slot is the pedestrian at (1, 0) with velocity (0, 0.2)
    assert slots[0] == pytest.approx([1.0, 0.0, 0.0, 0.2])


def test_pedestrian_slots_in_robot_frame():
    w = WorldState(robot=Pose2(0, 0, np.pi / 2), pedestrians=[make_ped(0, 2, 0.0, 1.0)])
    f = extract_features(w, Pose2(0, 0, 0), (0.0, 0.0))
    base = 6 + N_FEATURE_RAYS + N_LOW_RAYS
    # ahead of the rotated robot: +x in its frame; world +y velocity too
    assert f[base : base + 4] == pytest.approx([2.0, 0.0, 1.0, 0.0])


def test_ray_entries_bounded():
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = WorldState(
            robot=Pose2(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3)),
            small_objects=np.column_stack(
                [rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3), np.full(3, 0.1)]
            ),
        )
        f = extract_features(w, Pose2(1, 1, 0), (0.2, 0.1))
        rays = f[6 : 6 + N_FEATURE_RAYS + N_LOW_RAYS]
        assert np.all(rays >= 0.0) and np.all(rays <= 1.0)


def test_scene_for_objective_is_robot_frame():
    w = WorldState(robot=Pose2(2.0, 1.0, np.pi / 2), pedestrians=[make_ped(2.0, 3.0, 0.0, 0.3)])
    goal = Pose2(2.0, 4.0, np.pi / 2)
    scene = scene_for_objective(w, goal, (0.4, 0.0))
    assert scene["goal"] == pytest.approx([3.0, 0.0, 0.0])
    assert scene["ped_pos"][0] == pytest.approx([2.0, 0.0])
    assert scene["ped_vel"][0] == pytest.approx([0.3, 0.0])
    assert scene["ped_mask"][0] and not scene["ped_mask"][1:].any()
    assert scene["prev_action"] == pytest.approx([0.4, 0.0])
    assert scene["cloud"].shape == (64, 2)
