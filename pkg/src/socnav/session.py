"""One robot deployment: the observe/act cycle over a scenario.

Couples the world, course tracking, marker localization, feature extraction,
and reward into the per-step loop that data collection, evaluation, and
online training all share.  The policy side stays outside: callers look at
`observe()`, pick a plan, and hand it to `step()`.

Pose usage is deliberate: the policy, its goal block, and the reward see
only the localization estimate; physics, event flags, course progress, and
metrics run on the true pose.
"""

from __future__ import annotations

import numpy as np

from . import world as sim
from .course import CourseTracker, TopoCourse, subgoal_index, subgoal_pose
from .features import extract_features, scene_for_objective
from .geometry import Pose2
from .intervention import InterventionMonitor, InterventionVerdict
from .localization import Localizer
from .metrics import StepSample
from .replay import make_transition
from .rewards import RewardConstants, compute_reward
from .scenario import Scenario, build_course, build_markers, build_world, place_small_objects


class EnvSession:
    def __init__(
        self,
        scenario: Scenario,
        rng: np.random.Generator | None = None,
        with_objects: bool = False,
        reward_constants: RewardConstants | None = None,
    ):
        self.scenario = scenario
        rng = rng if rng is not None else np.random.default_rng()
        # Independent streams so object layout never shifts the drift noise.
        self._object_rng, drift_rng = rng.spawn(2)

        self.course: TopoCourse = build_course(scenario)
        self.world = build_world(scenario, with_objects=with_objects, rng=self._object_rng)
        self.localizer = Localizer(
            build_markers(scenario),
            rng=drift_rng,
            sigma_translation=scenario.sigma_translation,
            sigma_rotation=scenario.sigma_rotation,
            marker_range=scenario.marker_range,
            marker_bearing=scenario.marker_bearing,
        )
        self.localizer.reset(self.world.robot)
        self.tracker = CourseTracker(self.course)
        self.tracker.update(self.world.robot, self.world.time)
        self.monitor = InterventionMonitor()
        self.reward_constants = reward_constants or RewardConstants()
        self.interventions = 0
        self._last_flags = None

    # -- observation ---------------------------------------------------------

    def goal_pose(self) -> Pose2:
        return subgoal_pose(self.course, subgoal_index(self.course, self.tracker.node_index))

    def observe(self) -> dict:
        est = self.localizer.estimate()
        goal = self.goal_pose()
        prev = self.world.prev_action
        return {
            "features": extract_features(self.world, goal, prev, estimated_pose=est),
            "scene": scene_for_objective(self.world, goal, prev, estimated_pose=est),
            "goal_pose": goal,
            "estimated_pose": est,
        }

    # -- stepping --------------------------------------------------------------

    def step(self, plan: np.ndarray, obs: dict | None = None) -> tuple[np.ndarray, StepSample]:
        """Execute plan[0], advance everything, and package the transition.

        Returns (record, sample): a length-1 transition array (done=False;
        callers flip it when they cut the episode) and the metrics sample.
        """
        plan = np.asarray(plan, dtype=float).reshape(-1, 2)
        if obs is None:
            obs = self.observe()
        goal = obs["goal_pose"]

        old_true = self.world.robot
        flags = sim.step(self.world, plan[0])
        self.localizer.advance(old_true, self.world.robot)
        self.localizer.observe(self.world.robot)

        # Direction terms score the twist the base actually achieved, not the
        # command: a robot in contact makes no progress however hard it is
        # driven, so those steps earn the bare penalty.
        reward = compute_reward(
            obs["estimated_pose"], goal, self.world.robot_velocity, flags, self.reward_constants
        )
        self.tracker.update(self.world.robot, self.world.time)

        nxt = self.observe()
        record = make_transition(
            features=obs["features"],
            plan=plan,
            reward=reward,
            features_next=nxt["features"],
            done=False,
            flags=flags,
            scene=obs["scene"],
            robot_pose=obs["estimated_pose"].as_array(),
            goal_pose=goal.as_array(),
        )
        sample = StepSample(
            flags=flags,
            on_patch=self.world.on_bumpy_patch(self.world.robot.position()),
            distance=float(np.hypot(*(self.world.robot.position() - old_true.position()))),
        )
        self._last_flags = flags
        return record, sample

    # -- interventions -----------------------------------------------------------

    def poll_intervention(self) -> InterventionVerdict:
        if self._last_flags is None:
            return InterventionVerdict(False)
        return self.monitor.check(self.world, self._last_flags, self.tracker)

    def apply_reset(self, verdict: InterventionVerdict) -> None:
        """Teleoperator reset: place the robot at the verdict pose, stationary,
        with the localizer re-anchored there."""
        self.world.robot = verdict.reset_pose
        self.world.robot_velocity = np.zeros(2)
        self.world.prev_action = np.zeros(2)
        self.localizer.reset(self.world.robot)
        self.tracker.update(self.world.robot, self.world.time)
        self.monitor.reset_after(self.world.time, self.tracker)
        self.interventions += 1
        self._last_flags = None

    def reshuffle_objects(self) -> None:
        """Fresh small-object layout (each lap gets its own)."""
        if self.scenario.object_count:
            self.world.small_objects = place_small_objects(
                self.scenario, self.course, self._object_rng, self.world.robot
            )
