"""Planar poses, rigid transforms, unicycle integration, and range sensing.

Everything downstream (simulation, rollout prediction, the planner, the
localization chain) is built on the primitives in this module, so the
conventions are pinned here once: poses are (x, y, theta) with theta
normalized to (-pi, pi], transforms act on the left, and the unicycle is
integrated along exact circular arcs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

# Below this rate the arc integrator switches to its straight-line limit.
OMEGA_EPS = 1e-8


def wrap_angle(theta):
    """Normalize an angle (scalar or array) to the half-open interval (-pi, pi]."""
    wrapped = theta - TWO_PI * np.round(np.asarray(theta, dtype=float) / TWO_PI)
    wrapped = np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass
class Pose2:
    """Planar pose. theta is kept normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.x = float(self.x)
        self.y = float(self.y)
        self.theta = wrap_angle(float(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @staticmethod
    def from_array(arr) -> "Pose2":
        return Pose2(float(arr[0]), float(arr[1]), float(arr[2]))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass
class Twist:
    """Commanded body velocity: forward speed v (m/s) and yaw rate omega (rad/s)."""

    v: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega], dtype=float)


# Action box for the robot base: no reverse, symmetric yaw.
V_MIN, V_MAX = 0.0, 0.5
OMEGA_MIN, OMEGA_MAX = -1.0, 1.0
ACTION_LOW = np.array([V_MIN, OMEGA_MIN])
ACTION_HIGH = np.array([V_MAX, OMEGA_MAX])


def clip_action(action: np.ndarray) -> np.ndarray:
    return np.clip(action, ACTION_LOW, ACTION_HIGH)


@dataclass
class Transform2:
    """Rigid transform on the plane: rotation then translation (T p = R p + t)."""

    rotation: float
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = wrap_angle(float(self.rotation))
        self.translation = np.asarray(self.translation, dtype=float).reshape(2)

    @staticmethod
    def identity() -> "Transform2":
        return Transform2(0.0, np.zeros(2))

    @staticmethod
    def from_pose(pose: Pose2) -> "Transform2":
        return Transform2(pose.theta, pose.position())

    def to_pose(self) -> Pose2:
        return Pose2(self.translation[0], self.translation[1], self.rotation)

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def compose(self, other: "Transform2") -> "Transform2":
        """self then applied after other: result = self * other."""
        return Transform2(
            self.rotation + other.rotation,
            self.translation + self.matrix() @ other.translation,
        )

    def inverse(self) -> "Transform2":
        rot_inv = -self.rotation
        c, s = np.cos(rot_inv), np.sin(rot_inv)
        r_inv = np.array([[c, -s], [s, c]])
        return Transform2(rot_inv, -(r_inv @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (..., 2) through the transform."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix().T + self.translation

    def apply_pose(self, pose: Pose2) -> Pose2:
        xy = self.apply(pose.position())
        return Pose2(xy[0], xy[1], self.rotation + pose.theta)


def relative_pose(reference: Pose2, target: Pose2) -> Pose2:
    """Express target in the frame of reference (inverse(reference) * target)."""
    return Transform2.from_pose(reference).inverse().apply_pose(target)


def unicycle_step(pose: Pose2, v: float, omega: float, dt: float) -> Pose2:
    """Integrate the unicycle exactly along a circular arc for one period.

    For |omega| below OMEGA_EPS the removable singularity is replaced by the
    straight-line limit.
    """
    theta = pose.theta
    theta_new = theta + omega * dt
    if abs(omega) < OMEGA_EPS:
        x_new = pose.x + v * dt * np.cos(theta)
        y_new = pose.y + v * dt * np.sin(theta)
    else:
        radius = v / omega
        x_new = pose.x + radius * (np.sin(theta_new) - np.sin(theta))
        y_new = pose.y - radius * (np.cos(theta_new) - np.cos(theta))
    return Pose2(x_new, y_new, theta_new)


def arc_step_batch(poses: np.ndarray, actions: np.ndarray, dt: float) -> np.ndarray:
    """Vectorized unicycle_step. poses (B, 3), actions (B, 2) -> (B, 3)."""
    x, y, theta = poses[:, 0], poses[:, 1], poses[:, 2]
    v, omega = actions[:, 0], actions[:, 1]
    theta_new = theta + omega * dt
    straight = np.abs(omega) < OMEGA_EPS
    # Guard the division; the straight branch overrides those lanes.
    omega_safe = np.where(straight, 1.0, omega)
    radius = v / omega_safe
    x_arc = x + radius * (np.sin(theta_new) - np.sin(theta))
    y_arc = y - radius * (np.cos(theta_new) - np.cos(theta))
    x_lin = x + v * dt * np.cos(theta)
    y_lin = y + v * dt * np.sin(theta)
    out = np.empty_like(poses)
    out[:, 0] = np.where(straight, x_lin, x_arc)
    out[:, 1] = np.where(straight, y_lin, y_arc)
    out[:, 2] = wrap_angle(theta_new)
    return out


def arc_step_jacobians(poses: np.ndarray, actions: np.ndarray, dt: float):
    """Partial derivatives of arc_step_batch outputs.

    Returns (d_pose (B, 3, 3), d_action (B, 3, 2)) where d_pose[b, i, j] is
    d new_pose_i / d pose_j.  The straight-line branch uses the analytic limit
    of the arc partials so the derivative field is continuous at omega = 0.
    """
    n = poses.shape[0]
    theta = poses[:, 2]
    v, omega = actions[:, 0], actions[:, 1]
    theta_new = theta + omega * dt
    s1, c1 = np.sin(theta), np.cos(theta)
    s2, c2 = np.sin(theta_new), np.cos(theta_new)

    straight = np.abs(omega) < OMEGA_EPS
    omega_safe = np.where(straight, 1.0, omega)
    radius = v / omega_safe

    # Arc-branch partials.
    dx_dtheta_arc = radius * (c2 - c1)
    dy_dtheta_arc = radius * (s2 - s1)
    dx_dv_arc = (s2 - s1) / omega_safe
    dy_dv_arc = -(c2 - c1) / omega_safe
    dx_domega_arc = radius * c2 * dt - radius * (s2 - s1) / omega_safe
    dy_domega_arc = radius * (c2 - c1) / omega_safe + radius * s2 * dt

    # Straight-line limits.
    dx_dtheta_lin = -v * dt * s1
    dy_dtheta_lin = v * dt * c1
    dx_dv_lin = dt * c1
    dy_dv_lin = dt * s1
    dx_domega_lin = -0.5 * v * dt * dt * s1
    dy_domega_lin = 0.5 * v * dt * dt * c1

    d_pose = np.zeros((n, 3, 3))
    d_pose[:, 0, 0] = 1.0
    d_pose[:, 1, 1] = 1.0
    d_pose[:, 2, 2] = 1.0
    d_pose[:, 0, 2] = np.where(straight, dx_dtheta_lin, dx_dtheta_arc)
    d_pose[:, 1, 2] = np.where(straight, dy_dtheta_lin, dy_dtheta_arc)

    d_action = np.zeros((n, 3, 2))
    d_action[:, 0, 0] = np.where(straight, dx_dv_lin, dx_dv_arc)
    d_action[:, 1, 0] = np.where(straight, dy_dv_lin, dy_dv_arc)
    d_action[:, 0, 1] = np.where(straight, dx_domega_lin, dx_domega_arc)
    d_action[:, 1, 1] = np.where(straight, dy_domega_lin, dy_domega_arc)
    d_action[:, 2, 1] = dt
    return d_pose, d_action


# ---------------------------------------------------------------------------
# Obstacles and range sensing


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points (..., 2) to segment ab."""
    pts = np.asarray(points, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return np.linalg.norm(pts - a, axis=-1)
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(pts - proj, axis=-1)


@dataclass
class ObstacleSet:
    """Static scene geometry: circles (N, 3) as (cx, cy, r) and convex polygons.

    Polygon vertices must be convex and counter-clockwise; that is validated on
    construction because both the signed distance and the containment test
    rely on it.
    """

    circles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    polygons: list = field(default_factory=list)

    def __post_init__(self):
        self.circles = np.asarray(self.circles, dtype=float).reshape(-1, 3)
        self.polygons = [np.asarray(p, dtype=float).reshape(-1, 2) for p in self.polygons]
        for poly in self.polygons:
            if len(poly) < 3:
                raise ValueError("polygon needs at least 3 vertices")
            edges = np.roll(poly, -1, axis=0) - poly
            cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
            if np.any(cross < -1e-12):
                raise ValueError("polygon must be convex with CCW winding")

    def is_empty(self) -> bool:
        return len(self.circles) == 0 and len(self.polygons) == 0

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance from points (..., 2) to the nearest surface.

        Negative inside a primitive. Empty sets return +inf.
        """
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = pts.reshape(-1, 2)
        best = np.full(len(pts), np.inf)
        for cx, cy, r in self.circles:
            d = np.linalg.norm(pts - np.array([cx, cy]), axis=-1) - r
            best = np.minimum(best, d)
        for poly in self.polygons:
            edge_d = np.min(
                np.stack(
                    [
                        _point_segment_distance(pts, poly[i], poly[(i + 1) % len(poly)])
                        for i in range(len(poly))
                    ]
                ),
                axis=0,
            )
            inside = np.ones(len(pts), dtype=bool)
            for i in range(len(poly)):
                a, b = poly[i], poly[(i + 1) % len(poly)]
                cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
                inside &= cross >= 0.0
            best = np.minimum(best, np.where(inside, -edge_d, edge_d))
        return float(best[0]) if scalar else best.reshape(np.asarray(points).shape[:-1])

    def contains(self, point: np.ndarray) -> bool:
        return bool(self.signed_distance(point) < 0.0)

    def merged_with(self, other: "ObstacleSet") -> "ObstacleSet":
        return ObstacleSet(
            circles=np.vstack([self.circles, other.circles]),
            polygons=list(self.polygons) + list(other.polygons),
        )


def polygon_contains(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Membership test for a single convex CCW polygon; points (..., 2)."""
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    inside = np.ones(len(pts), dtype=bool)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= cross >= 0.0
    return bool(inside[0]) if scalar else inside


def ray_cast(
    origin: np.ndarray,
    heading: float,
    obstacles: ObstacleSet,
    n_rays: int,
    max_range: float,
    arc: float | None = None,
) -> np.ndarray:
    """Cast n_rays rays; return ranges.

    By default the fan covers the full circle at bearings heading + 2*pi*i/n.
    With `arc` set, the rays instead span [heading - arc/2, heading + arc/2]
    inclusive, evenly spaced.  Ranges are clipped to [0, max_range]; a miss
    reports max_range.
    """
    origin = np.asarray(origin, dtype=float).reshape(2)
    if arc is None:
        bearings = heading + TWO_PI * np.arange(n_rays) / n_rays
    else:
        bearings = heading + np.linspace(-arc / 2.0, arc / 2.0, n_rays)
    dirs = np.stack([np.cos(bearings), np.sin(bearings)], axis=-1)
    ranges = np.full(n_rays, max_range)

    for cx, cy, r in obstacles.circles:
        rel = np.array([cx, cy]) - origin
        t_mid = dirs @ rel
        closest_sq = float(rel @ rel) - t_mid**2
        disc = r * r - closest_sq
        hit = disc >= 0.0
        t_hit = t_mid - np.sqrt(np.where(hit, disc, 0.0))
        valid = hit & (t_hit >= 0.0)
        ranges = np.where(valid, np.minimum(ranges, t_hit), ranges)

    for poly in obstacles.polygons:
        for i in range(len(poly)):
            a = poly[i]
            b = poly[(i + 1) % len(poly)]
            seg = b - a
            # Solve origin + t*dir = a + u*seg for each ray by Cramer's rule.
            denom = dirs[:, 0] * (-seg[1]) - dirs[:, 1] * (-seg[0])
            ok = np.abs(denom) > 1e-14
            denom_safe = np.where(ok, denom, 1.0)
            rhs = a - origin
            t = (rhs[0] * (-seg[1]) - rhs[1] * (-seg[0])) / denom_safe
            u = (dirs[:, 0] * rhs[1] - dirs[:, 1] * rhs[0]) / denom_safe
            valid = ok & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
            ranges = np.where(valid, np.minimum(ranges, t), ranges)

    return np.clip(ranges, 0.0, max_range)


def ray_hit_points(origin: np.ndarray, heading: float, ranges: np.ndarray) -> np.ndarray:
    """Convert ranges from ray_cast back to points in the casting frame."""
    n = len(ranges)
    bearings = heading + TWO_PI * np.arange(n) / n
    return np.asarray(origin, dtype=float) + ranges[:, None] * np.stack(
        [np.cos(bearings), np.sin(bearings)], axis=-1
    )


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=-1)))


def point_to_polyline_distance(point: np.ndarray, polyline: np.ndarray) -> float:
    """Distance from a point to an open polyline (list of >= 2 vertices)."""
    pts = np.asarray(polyline, dtype=float)
    best = np.inf
    for i in range(len(pts) - 1):
        best = min(best, float(_point_segment_distance(point, pts[i], pts[i + 1])))
    return best
