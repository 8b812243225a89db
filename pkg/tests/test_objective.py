import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socnav.geometry import Pose2, Transform2, unicycle_step
from socnav.objective import (
    DT,
    HORIZON,
    PERSONAL_DISTANCE,
    ROBOT_RADIUS,
    ObjectiveWeights,
    grad_tau,
    grad_tau_batch,
    rollout,
    score,
)


def random_scene(rng, n_cloud=12, n_peds=2):
    start = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-np.pi, np.pi)])
    tau = np.column_stack([rng.uniform(0, 0.5, HORIZON), rng.uniform(-1, 1, HORIZON)])
    goal = start + np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1)])
    # cluster cloud points near the start so hinges actually activate
    cloud = start[:2] + rng.uniform(-1.5, 1.5, size=(n_cloud, 2))
    ped_pos = start[:2] + rng.uniform(-2, 2, size=(n_peds, 2))
    ped_vel = rng.uniform(-1, 1, size=(n_peds, 2))
    prev = np.array([rng.uniform(0, 0.5), rng.uniform(-1, 1)])
    return start, tau, goal, cloud, ped_pos, ped_vel, prev


def fd_grad_tau(start, tau, goal, cloud, ped_pos, ped_vel, prev, h=1e-6):
    grad = np.zeros_like(tau)
    for t in range(tau.shape[0]):
        for j in range(2):
            bump = tau.copy()
            bump[t, j] += h
            hi = score(start, bump, goal, cloud, ped_pos, ped_vel, prev_action=prev).total
            bump[t, j] -= 2 * h
            lo = score(start, bump, goal, cloud, ped_pos, ped_vel, prev_action=prev).total
            grad[t, j] = (hi - lo) / (2 * h)
    return grad


def test_rollout_matches_chained_steps():
    tau = np.array([[0.4, 0.5]] * HORIZON)
    pred = rollout(np.array([0.2, -0.1, 0.3]), tau)
    pose = Pose2(0.2, -0.1, 0.3)
    assert pred.poses[0] == pytest.approx([0.2, -0.1, 0.3])
    for t in range(HORIZON):
        pose = unicycle_step(pose, 0.4, 0.5, DT)
        assert pred.poses[t + 1] == pytest.approx(pose.as_array(), abs=1e-12)


def test_rollout_straight_distance():
    # Eight steps at full speed cover 8 * 0.5 * dt = 4/3 m straight ahead.
    tau = np.array([[0.5, 0.0]] * HORIZON)
    pred = rollout(np.zeros(3), tau)
    assert pred.poses[-1] == pytest.approx([8 * 0.5 * DT, 0.0, 0.0], abs=1e-12)
    assert pred.poses[-1][0] == pytest.approx(4.0 / 3.0)


def test_rollout_pedestrian_constant_velocity():
    # A pedestrian 4 m ahead walking toward the robot at 1 m/s closes 4/3 m
    # by prediction step 4.
    tau = np.zeros((HORIZON, 2))
    pred = rollout(np.zeros(3), tau, ped_positions=[[0.0, 4.0]], ped_velocities=[[0.0, -1.0]])
    assert pred.ped_positions[4, 0] == pytest.approx([0.0, 4.0 - 4.0 / 3.0], abs=1e-12)


def test_score_zero_at_goal_in_free_space():
    breakdown = score(np.zeros(3), np.zeros((HORIZON, 2)), goal=np.zeros(3))
    assert breakdown.total == pytest.approx(0.0, abs=1e-15)
    assert np.all(breakdown.pose == 0.0)
    assert np.all(breakdown.smooth == 0.0)


def test_score_is_nonpositive():
    rng = np.random.default_rng(0)
    for _ in range(20):
        start, tau, goal, cloud, ped_pos, ped_vel, prev = random_scene(rng)
        b = score(start, tau, goal, cloud, ped_pos, ped_vel, prev_action=prev)
        assert b.total <= 1e-12
        for arr in (b.pose, b.geometry, b.crowd, b.smooth):
            assert np.all(arr <= 1e-12)


def test_geometry_hinge_hand_value():
    # One cloud point 0.3 m from the single predicted pose: the hinge is
    # (0.5 + 0.1 - 0.3) and the step term is -4 * 0.3^2 = -0.36.
    weights = ObjectiveWeights()
    tau = np.zeros((HORIZON, 2))  # robot stays at the origin
    cloud = np.array([[0.3, 0.0]])
    b = score(np.zeros(3), tau, goal=np.zeros(3), cloud=cloud, weights=weights)
    expected_step = -weights.geometry * (ROBOT_RADIUS + weights.margin - 0.3) ** 2
    assert expected_step == pytest.approx(-4.0 * 0.09)
    assert b.geometry[0] == pytest.approx(expected_step, abs=1e-12)
    discounts = 0.97 ** np.arange(HORIZON)
    assert b.total == pytest.approx(float(np.sum(discounts * expected_step)), abs=1e-12)


def test_crowd_hinge_activates_inside_personal_distance():
    tau = np.zeros((HORIZON, 2))
    near = score(np.zeros(3), tau, goal=np.zeros(3),
                 ped_positions=[[0.9, 0.0]], ped_velocities=[[0.0, 0.0]])
    far = score(np.zeros(3), tau, goal=np.zeros(3),
                ped_positions=[[PERSONAL_DISTANCE + 0.01, 0.0]], ped_velocities=[[0.0, 0.0]])
    assert near.crowd[0] == pytest.approx(-2.0 * 0.1**2, abs=1e-12)
    assert far.total == pytest.approx(0.0, abs=1e-15)


def test_smooth_term_uses_previous_executed_action():
    tau = np.zeros((HORIZON, 2))
    prev = np.array([0.5, 0.0])
    b = score(np.zeros(3), tau, goal=np.zeros(3), prev_action=prev)
    assert b.smooth[0] == pytest.approx(-0.1 * 0.25, abs=1e-12)
    assert np.all(b.smooth[1:] == 0.0)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(10):
        start, tau, goal, cloud, ped_pos, ped_vel, prev = random_scene(rng)
        total, analytic = grad_tau(start, tau, goal, cloud, ped_pos, ped_vel, prev_action=prev)
        numeric = fd_grad_tau(start, tau, goal, cloud, ped_pos, ped_vel, prev)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        worst = max(worst, np.linalg.norm(analytic - numeric) / denom)
    assert worst < 1e-5


def test_grad_total_matches_score():
    rng = np.random.default_rng(9)
    start, tau, goal, cloud, ped_pos, ped_vel, prev = random_scene(rng)
    total, _ = grad_tau(start, tau, goal, cloud, ped_pos, ped_vel, prev_action=prev)
    b = score(start, tau, goal, cloud, ped_pos, ped_vel, prev_action=prev)
    assert total == pytest.approx(b.total, abs=1e-12)


def test_grad_batch_matches_singles():
    rng = np.random.default_rng(5)
    scenes = [random_scene(rng) for _ in range(4)]
    weights = ObjectiveWeights()
    start = np.stack([s[0] for s in scenes])
    tau = np.stack([s[1] for s in scenes])
    goal = np.stack([s[2] for s in scenes])
    cloud = np.stack([s[3] for s in scenes])
    ped_pos = np.stack([s[4] for s in scenes])
    ped_vel = np.stack([s[5] for s in scenes])
    prev = np.stack([s[6] for s in scenes])
    mask = np.ones(ped_pos.shape[:2], dtype=bool)
    totals, grads = grad_tau_batch(start, tau, goal, cloud, ped_pos, ped_vel, mask, prev, weights, 0.97)
    for i, (s, t, g, c, pp, pv, pr) in enumerate(scenes):
        total_i, grad_i = grad_tau(s, t, g, c, pp, pv, prev_action=pr)
        assert totals[i] == pytest.approx(total_i, abs=1e-11)
        assert grads[i] == pytest.approx(grad_i, abs=1e-11)


def test_masked_pedestrians_are_ignored():
    tau = np.zeros((HORIZON, 2))
    # A padded pedestrian sitting on the robot must not contribute when masked.
    b = score(np.zeros(3), tau, goal=np.zeros(3),
              ped_positions=[[0.0, 0.0]], ped_velocities=[[0.0, 0.0]],
              ped_mask=[False])
    assert b.total == pytest.approx(0.0, abs=1e-15)


def test_empty_cloud_and_no_pedestrians():
    b = score(np.zeros(3), np.zeros((HORIZON, 2)), goal=np.array([1.0, 0.0, 0.0]),
              cloud=np.zeros((0, 2)))
    assert np.all(b.geometry == 0.0)
    assert np.all(b.crowd == 0.0)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(gx=st.floats(-2, 2), gy=st.floats(-2, 2), gtheta=st.floats(-3, 3), seed=st.integers(0, 50))
def test_score_invariant_under_rigid_transform(gx, gy, gtheta, seed):
    rng = np.random.default_rng(seed)
    start, tau, goal, cloud, ped_pos, ped_vel, prev = random_scene(rng)
    g = Transform2(gtheta, np.array([gx, gy]))
    b0 = score(start, tau, goal, cloud, ped_pos, ped_vel, prev_action=prev)
    rot = g.matrix()
    b1 = score(
        g.apply_pose(Pose2.from_array(start)).as_array(),
        tau,
        g.apply_pose(Pose2.from_array(goal)).as_array(),
        g.apply(cloud),
        g.apply(ped_pos),
        ped_vel @ rot.T,
        prev_action=prev,
    )
    assert b1.total == pytest.approx(b0.total, abs=1e-9)
