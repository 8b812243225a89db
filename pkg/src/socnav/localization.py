"""Drifting odometry with fiducial snap-back.

The robot's pose estimate is the composition of two transforms: a visual
odometry chain that integrates noisy frame-to-frame motion, and a global
correction that is re-solved every time a mapped fiducial comes into view.

For a fiducial i the registry stores the mapping-run robot pose G_i and the
marker pose in that robot's frame, A_i.  When the live robot sees the same
marker at relative pose D (detection is in the true robot frame; the estimate
plays no part in what the camera sees), the correction becomes

    C = G_i * A_i * (V * D)^-1

with V the current odometry transform.  G_i * A_i is the marker in the global
frame and V * D is the same marker in the odometry frame, so C maps odometry
coordinates to global ones.  The published estimate is C * V.  With an exact
detection this cancels the accumulated drift completely; between sightings
the drift grows again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, Transform2, relative_pose, wrap_angle


@dataclass
class MarkerDetection:
    index: int
    range: float
    bearing: float
    relative: Pose2


class Localizer:
    """Pose estimator owned by the robot, never by the simulator."""

    def __init__(
        self,
        markers,
        rng: np.random.Generator,
        sigma_translation: float = 0.005,
        sigma_rotation: float = 0.002,
        marker_range: float = 4.0,
        marker_bearing: float = np.deg2rad(60.0),
    ):
        self.markers = list(markers)
        self.rng = rng
        self.sigma_translation = float(sigma_translation)
        self.sigma_rotation = float(sigma_rotation)
        self.marker_range = float(marker_range)
        self.marker_bearing = float(marker_bearing)
        self._odometry = Transform2.identity()
        self._correction = Transform2.identity()
        self.corrections_applied = 0

    def reset(self, true_pose: Pose2) -> None:
        """Re-anchor on the true pose, as after a teleoperator reset."""
        self._odometry = Transform2.from_pose(true_pose)
        self._correction = Transform2.identity()

    def advance(self, prev_true: Pose2, new_true: Pose2) -> None:
        """Integrate one step of odometry from the executed motion.

        The frame-to-frame displacement is measured in the robot frame and
        perturbed there, so drift compounds along the path rather than in
        fixed world axes.
        """
        delta = relative_pose(prev_true, new_true)
        noisy = Pose2(
            delta.x + self.rng.normal(0.0, self.sigma_translation),
            delta.y + self.rng.normal(0.0, self.sigma_translation),
            delta.theta + self.rng.normal(0.0, self.sigma_rotation),
        )
        self._odometry = self._odometry.compose(Transform2.from_pose(noisy))

    def detect(self, true_pose: Pose2) -> MarkerDetection | None:
        """Closest registry marker inside the camera's range and field of view."""
        best = None
        for i, spec in enumerate(self.markers):
            rel = relative_pose(true_pose, spec.marker_pose)
            rng_m = float(np.hypot(rel.x, rel.y))
            bearing = float(np.arctan2(rel.y, rel.x))
            if rng_m <= self.marker_range and abs(bearing) <= self.marker_bearing:
                if best is None or rng_m < best.range:
                    best = MarkerDetection(index=i, range=rng_m, bearing=bearing, relative=rel)
        return best

    def observe(self, true_pose: Pose2) -> MarkerDetection | None:
        """Run detection and, on a hit, re-solve the global correction."""
        det = self.detect(true_pose)
        if det is None:
            return None
        spec = self.markers[det.index]
        marker_in_map_robot = Transform2.from_pose(relative_pose(spec.mapping_pose, spec.marker_pose))
        marker_global = Transform2.from_pose(spec.mapping_pose).compose(marker_in_map_robot)
        marker_odometry = self._odometry.compose(Transform2.from_pose(det.relative))
        self._correction = marker_global.compose(marker_odometry.inverse())
        self.corrections_applied += 1
        return det

    def estimate(self) -> Pose2:
        return self._correction.compose(self._odometry).to_pose()

    def drift_error(self, true_pose: Pose2) -> tuple[float, float]:
        """Translation and heading error of the current estimate, for logging."""
        est = self.estimate()
        dt = float(np.hypot(est.x - true_pose.x, est.y - true_pose.y))
        dr = abs(wrap_angle(est.theta - true_pose.theta))
        return dt, dr
