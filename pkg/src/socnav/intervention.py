"""Simulated teleoperator: decides when a run needs a manual reset.

Three rules, checked every step:

  * contact with something for 3 s or longer without a break,
  * more than 3 m of lateral deviation from the course polyline,
  * 30 s without reaching a new course node.

A triggered verdict carries the reset pose: the nearest course node, skipping
ahead past any node the robot would not physically fit on.  If the
same spot keeps defeating the robot, the monitor escalates: from the third
consecutive reset without progress in between, the reset pose advances to the
next node along the course, the same way a human minder would carry the robot
past whatever it is stuck on rather than feeding it back into the trap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .course import CourseTracker, nearest_node, subgoal_index
from .geometry import Pose2
from .world import DT, ROBOT_RADIUS, EventFlags, WorldState

COLLISION_LIMIT_S = 3.0
LATERAL_LIMIT_M = 3.0
STALL_LIMIT_S = 30.0
ESCALATION_COUNT = 3
RESET_CLEARANCE_M = ROBOT_RADIUS + 0.1


def _clear_node(world: WorldState, course, start: int) -> int:
    """First node from `start` onward where the robot can actually stand.

    Course polylines are sketched by hand and geometry shifts between runs,
    so a node can end up inside the collision band of a wall or an object.
    Nobody would put the robot down there; walk forward until it fits.
    """
    for k in range(len(course.nodes)):
        i = (start + k) % len(course.nodes)
        if world.static_distance(course.nodes[i].position()) >= RESET_CLEARANCE_M:
            return i
    return start


@dataclass
class InterventionVerdict:
    triggered: bool
    reason: str = ""
    reset_pose: Pose2 | None = None


@dataclass
class InterventionMonitor:
    """Tracks the per-rule timers across steps; reset_after() rearms them."""

    collision_time: float = 0.0
    resets_without_progress: int = 0
    progress_at_last_reset: int = field(default=-1, repr=False)

    def check(self, world: WorldState, flags: EventFlags, tracker: CourseTracker) -> InterventionVerdict:
        self.collision_time = self.collision_time + DT if flags.collision else 0.0

        reason = ""
        if self.collision_time >= COLLISION_LIMIT_S:
            reason = "collision"
        elif tracker.course.lateral_deviation(world.robot.position()) > LATERAL_LIMIT_M:
            reason = "deviation"
        elif tracker.time_since_progress(world.time) >= STALL_LIMIT_S:
            reason = "stall"
        if not reason:
            return InterventionVerdict(False)

        course = tracker.course
        node = nearest_node(course, world.robot)
        if tracker.progress == self.progress_at_last_reset:
            self.resets_without_progress += 1
        else:
            self.resets_without_progress = 1
        self.progress_at_last_reset = tracker.progress
        if self.resets_without_progress >= ESCALATION_COUNT:
            node = subgoal_index(course, node)
        node = _clear_node(world, course, node)
        return InterventionVerdict(True, reason, course.nodes[node])

    def reset_after(self, time: float, tracker: CourseTracker) -> None:
        """Re-arm timers once the reset pose has been applied."""
        self.collision_time = 0.0
        tracker.last_progress_time = time
