"""Topological courses: sparse pose graphs the robot follows node by node.

A course is an ordered list of node poses with bounded spacing.  The robot's
current node is the argmin-distance node; the pose it is asked to reach next
is that node's successor (wrapping on loop courses).  CourseTracker layers lap
counting and forward-progress bookkeeping on top, unwrapping the cyclic node
index the same way one unwraps a phase angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, point_to_polyline_distance, polyline_length

MAX_NODE_SPACING = 2.0


@dataclass
class TopoCourse:
    """Ordered node poses; on loop courses the last node repeats the first."""

    nodes: list
    loop: bool = False

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("a course needs at least two nodes")
        positions = self.positions()
        gaps = np.linalg.norm(np.diff(positions, axis=0), axis=-1)
        if np.any(gaps > MAX_NODE_SPACING + 1e-9):
            raise ValueError(f"node spacing exceeds {MAX_NODE_SPACING} m")
        if self.loop:
            first, last = self.nodes[0], self.nodes[-1]
            if np.linalg.norm(first.position() - last.position()) > 1e-9:
                raise ValueError("loop courses must start and end at the same pose")

    def positions(self) -> np.ndarray:
        return np.stack([n.position() for n in self.nodes])

    def __len__(self) -> int:
        return len(self.nodes)

    def unique_count(self) -> int:
        """Number of distinct nodes (the duplicated loop endpoint collapses)."""
        return len(self.nodes) - 1 if self.loop else len(self.nodes)

    def lap_length(self) -> float:
        return polyline_length(self.positions())

    def polyline(self) -> np.ndarray:
        return self.positions()

    def lateral_deviation(self, point) -> float:
        return point_to_polyline_distance(point, self.positions())


def nearest_node(course: TopoCourse, pose) -> int:
    """Argmin-distance node index; ties break toward the larger index so the
    robot is always matched forward along the route."""
    p = np.asarray(pose, dtype=float)[:2] if not isinstance(pose, Pose2) else pose.position()
    dists = np.linalg.norm(course.positions() - p, axis=-1)
    best = len(dists) - 1 - int(np.argmin(dists[::-1]))
    return best


def advance_subgoal(course: TopoCourse, pose, current_index: int) -> int:
    """Re-localize onto the course: returns the argmin-distance node index.

    current_index is accepted for call-site symmetry with stateful trackers;
    the match itself is global so a teleoperator reset anywhere on the course
    re-localizes correctly.
    """
    del current_index
    return nearest_node(course, pose)


def subgoal_index(course: TopoCourse, node_index: int) -> int:
    """The node the robot should head for from node_index.

    On loop courses the final node hands over to node 0 so the route continues
    around; on open courses the final node is its own subgoal (arrival).
    """
    if node_index < len(course) - 1:
        return node_index + 1
    return 0 if course.loop else node_index


def subgoal_pose(course: TopoCourse, node_index: int) -> Pose2:
    return course.nodes[subgoal_index(course, node_index)]


@dataclass
class CourseTracker:
    """Progress bookkeeping over a course: node unwrapping, laps, timing.

    Node indices live on the ring of unique nodes; update() unwraps the index
    difference (shorter way around) into a monotone-ish progress counter, from
    which laps completed and time-since-last-progress fall out.
    """

    course: TopoCourse
    node_index: int = 0
    progress: int = 0  # unwrapped node count from the start node
    laps_completed: int = 0
    last_progress_time: float = 0.0
    _max_progress: int = field(default=0, repr=False)

    def update(self, pose, time: float) -> None:
        n = self.course.unique_count()
        matched = nearest_node(self.course, pose)
        if self.course.loop and matched == len(self.course) - 1:
            matched = 0  # the duplicated endpoint is node 0
        delta = matched - self.node_index
        if self.course.loop:
            # unwrap: take the short way around the ring
            if delta > n / 2:
                delta -= n
            elif delta < -n / 2:
                delta += n
        self.node_index = matched
        self.progress += delta
        if self.progress > self._max_progress:
            self._max_progress = self.progress
            self.last_progress_time = time
        self.laps_completed = self._max_progress // n if self.course.loop else 0

    def subgoal(self) -> Pose2:
        return subgoal_pose(self.course, self.node_index)

    def time_since_progress(self, time: float) -> float:
        return time - self.last_progress_time

    def reset_pose(self, pose) -> Pose2:
        """Where a teleoperator would put the robot back: the nearest node."""
        return self.course.nodes[nearest_node(self.course, pose)]
