"""World state and one-step dynamics for the desk-scale navigation scenes.

A scene holds the robot, waypoint-following pedestrians driven by a social
force model, static obstacles, small floor objects (physically present but
deliberately absent from the planner/objective point cloud, see cloud()), and
bumpy floor patches.  step() advances everything by one control period and
reports the contact/proximity events the harness turns into rewards and
metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ObstacleSet,
    Pose2,
    polygon_contains,
    ray_cast,
    ray_hit_points,
    unicycle_step,
    wrap_angle,
)

DT = 1.0 / 3.0
ROBOT_RADIUS = 0.5
PED_RADIUS = 0.3
PERSONAL_DISTANCE = 1.0
BUMPY_SPEED_THRESHOLD = 0.05
LOW_FAN_ARC = np.pi / 2  # bumper fan spread, centered on the nose

# Social force parameters: desired walking speed, relaxation time toward it,
# and exponential repulsion magnitude A * exp((2r - d) / B).
PED_DESIRED_SPEED = 1.2
PED_RELAX_TIME = 0.5
PED_REPULSION_A = 2.0
PED_REPULSION_B = 0.3
PED_MAX_SPEED = 1.3 * PED_DESIRED_SPEED
PED_WAYPOINT_RADIUS = 0.5


@dataclass
class EventFlags:
    """Per-step contact and proximity readings.

    collision is the union of the three specific contact kinds; d_h and d_s
    are the post-step distances to the nearest pedestrian (inf when the scene
    has none) and to the nearest static surface including small objects.
    """

    collision: bool = False
    collision_static: bool = False
    collision_object: bool = False
    collision_pedestrian: bool = False
    bumpy: bool = False
    ped_violation: bool = False
    d_h: float = np.inf
    d_s: float = np.inf


@dataclass
class Pedestrian:
    position: np.ndarray
    velocity: np.ndarray
    waypoints: np.ndarray  # (K, 2), walked cyclically
    waypoint_index: int = 0

    def current_waypoint(self) -> np.ndarray:
        return self.waypoints[self.waypoint_index]


@dataclass
class WorldState:
    robot: Pose2
    robot_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    pedestrians: list = field(default_factory=list)
    obstacles: ObstacleSet = field(default_factory=ObstacleSet)
    small_objects: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (cx, cy, r)
    bumpy_patches: list = field(default_factory=list)  # convex CCW polygons
    time: float = 0.0
    prev_action: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def wall_distance(self, point) -> float:
        """Distance to the nearest large structure (walls, furniture)."""
        if self.obstacles.is_empty():
            return np.inf
        return float(self.obstacles.signed_distance(point))

    def object_distance(self, point) -> float:
        """Distance to the nearest small-object surface."""
        d = np.inf
        for cx, cy, r in self.small_objects:
            d = min(d, float(np.linalg.norm(np.asarray(point, dtype=float) - (cx, cy))) - r)
        return float(d)

    def static_distance(self, point) -> float:
        """Distance to the nearest static surface, small objects included."""
        return min(self.wall_distance(point), self.object_distance(point))

    def pedestrian_distance(self, point) -> float:
        if not self.pedestrians:
            return np.inf
        pts = np.stack([p.position for p in self.pedestrians])
        return float(np.min(np.linalg.norm(pts - np.asarray(point, dtype=float), axis=-1)))

    def sensed_obstacles(self) -> ObstacleSet:
        """Everything physically in the scene, as seen by the onboard rays."""
        if len(self.small_objects) == 0:
            return self.obstacles
        return self.obstacles.merged_with(ObstacleSet(circles=self.small_objects))

    def on_bumpy_patch(self, point) -> bool:
        return any(polygon_contains(poly, point) for poly in self.bumpy_patches)

    def sense_rays(self, n_rays: int, max_range: float) -> np.ndarray:
        """Range readings from the navigation lidar (tall structure only)."""
        return ray_cast(self.robot.position(), self.robot.theta, self.obstacles, n_rays, max_range)

    def sense_low_rays(self, n_rays: int, max_range: float) -> np.ndarray:
        """Short-range readings from the bumper-height fan.

        This is the only sensing that resolves floor-level debris; the lidar
        and the cloud built from it both scan above it.  The fan covers the
        forward +-45 degrees rather than the full circle: what matters about
        debris is which side of the nose it is on, and debris behind the
        axle cannot be steered around anyway.
        """
        if len(self.small_objects) == 0:
            return np.full(n_rays, max_range)
        objs = ObstacleSet(circles=self.small_objects)
        return ray_cast(
            self.robot.position(), self.robot.theta, objs, n_rays, max_range, arc=LOW_FAN_ARC
        )

    def cloud(self, n_rays: int = 64, max_range: float = 5.0) -> np.ndarray:
        """Estimated obstacle point cloud used by the trajectory score and the
        sampling planner.

        Built from large structure only: the estimator that produces it cannot
        resolve the small floor objects, which is exactly the modeling gap the
        online rewards are meant to correct.  Points are returned in the world
        frame; misses contribute points at max_range, far outside any hinge.
        """
        ranges = ray_cast(self.robot.position(), self.robot.theta, self.obstacles, n_rays, max_range)
        return ray_hit_points(self.robot.position(), self.robot.theta, ranges)


def _nearest_ped_distance(world: WorldState, point) -> float:
    return world.pedestrian_distance(point)


def _social_force_step(world: WorldState) -> None:
    """Advance every pedestrian by one control period.

    Waypoint attraction relaxes the velocity toward desired speed along the
    route; exponential repulsion pushes away from the robot, other
    pedestrians, and static surfaces.  Deterministic: no sampling here.
    """
    peds = world.pedestrians
    if not peds:
        return
    robot_pos = world.robot.position()
    statics = world.sensed_obstacles()
    positions = [p.position.copy() for p in peds]
    for i, ped in enumerate(peds):
        target = ped.current_waypoint()
        to_target = target - ped.position
        dist = np.linalg.norm(to_target)
        direction = to_target / dist if dist > 1e-9 else np.zeros(2)
        force = (PED_DESIRED_SPEED * direction - ped.velocity) / PED_RELAX_TIME

        rel = ped.position - robot_pos
        d = np.linalg.norm(rel)
        if d > 1e-9:
            force += PED_REPULSION_A * np.exp(((PED_RADIUS + ROBOT_RADIUS) - d) / PED_REPULSION_B) * rel / d

        for j, other in enumerate(positions):
            if j == i:
                continue
            rel = ped.position - other
            d = np.linalg.norm(rel)
            if d > 1e-9:
                force += PED_REPULSION_A * np.exp((2 * PED_RADIUS - d) / PED_REPULSION_B) * rel / d

        if not statics.is_empty():
            d = statics.signed_distance(ped.position)
            if np.isfinite(d):
                # push along the outward distance gradient (numeric, 2-point)
                h = 1e-5
                gx = (statics.signed_distance(ped.position + (h, 0.0)) - statics.signed_distance(ped.position - (h, 0.0))) / (2 * h)
                gy = (statics.signed_distance(ped.position + (0.0, h)) - statics.signed_distance(ped.position - (0.0, h))) / (2 * h)
                grad = np.array([gx, gy])
                norm = np.linalg.norm(grad)
                if norm > 1e-9:
                    force += PED_REPULSION_A * np.exp((PED_RADIUS - d) / PED_REPULSION_B) * grad / norm

        ped.velocity = ped.velocity + force * DT
        speed = np.linalg.norm(ped.velocity)
        if speed > PED_MAX_SPEED:
            ped.velocity *= PED_MAX_SPEED / speed
        ped.position = ped.position + ped.velocity * DT

        # keep centers out of solid geometry
        if not statics.is_empty():
            sd = statics.signed_distance(ped.position)
            if sd < 0.0:
                h = 1e-5
                gx = (statics.signed_distance(ped.position + (h, 0.0)) - statics.signed_distance(ped.position - (h, 0.0))) / (2 * h)
                gy = (statics.signed_distance(ped.position + (0.0, h)) - statics.signed_distance(ped.position - (0.0, h))) / (2 * h)
                grad = np.array([gx, gy])
                norm = np.linalg.norm(grad)
                if norm > 1e-9:
                    ped.position = ped.position - (sd - 1e-6) * grad / norm

        if np.linalg.norm(ped.current_waypoint() - ped.position) < PED_WAYPOINT_RADIUS:
            ped.waypoint_index = (ped.waypoint_index + 1) % len(ped.waypoints)


def step(world: WorldState, action) -> EventFlags:
    """Advance the world by one control period under action (v, omega).

    The robot motion is attempted first; if the new pose would penetrate the
    collision band around static geometry (distance < ROBOT_RADIUS) the move
    is blocked: the pose reverts and the commanded velocity is zeroed, which
    is what lets a wedged robot register a persistent collision.  Pedestrians
    then advance, and the flags are read off the final configuration.
    """
    action = np.asarray(action, dtype=float).reshape(2)
    v, omega = float(action[0]), float(action[1])

    old_pose = world.robot
    candidate = unicycle_step(old_pose, v, omega, DT)
    # Only large structure is solid enough to stop the base.  Small objects
    # get run over (the contact registers below as an object collision); were
    # they load-bearing here, the robot could never actually hit one and the
    # whole point of flagging them would be lost.
    d_new = world.wall_distance(candidate.position())
    d_old = world.wall_distance(old_pose.position())
    # Walls block any move that enters the collision band or digs deeper into
    # it; a move that increases clearance is always allowed so a wedged robot
    # can back out.
    blocked = d_new < ROBOT_RADIUS and (d_new < d_old or d_old >= ROBOT_RADIUS)
    if blocked:
        world.robot = old_pose
        world.robot_velocity = np.zeros(2)
    else:
        world.robot = candidate
        world.robot_velocity = np.array([v, omega])

    _social_force_step(world)
    world.time += DT

    flags = EventFlags()
    robot_pos = world.robot.position()
    d_static = world.wall_distance(robot_pos)
    d_objects = world.object_distance(robot_pos)
    flags.d_s = float(min(d_static, d_objects))
    flags.d_h = _nearest_ped_distance(world, robot_pos)

    flags.collision_static = bool(d_static < ROBOT_RADIUS)
    flags.collision_object = bool(d_objects < ROBOT_RADIUS)
    flags.collision_pedestrian = bool(flags.d_h < ROBOT_RADIUS)
    flags.collision = flags.collision_static or flags.collision_object or flags.collision_pedestrian
    if flags.collision:
        world.robot_velocity = np.zeros(2)

    moved_speed = float(world.robot_velocity[0])
    flags.bumpy = bool(world.on_bumpy_patch(robot_pos) and moved_speed > BUMPY_SPEED_THRESHOLD)
    flags.ped_violation = bool(flags.d_h < PERSONAL_DISTANCE)

    world.prev_action = np.array([v, omega]) if not blocked else np.zeros(2)
    return flags


def nearby_pedestrians(world: WorldState, k: int = 3):
    """The k nearest pedestrians: (positions (k,2), velocities (k,2), mask (k,)).

    Slots are sorted by distance to the robot and zero-padded past the number
    actually present; the mask marks real entries.
    """
    positions = np.zeros((k, 2))
    velocities = np.zeros((k, 2))
    mask = np.zeros(k, dtype=bool)
    if world.pedestrians:
        robot_pos = world.robot.position()
        dists = [float(np.linalg.norm(p.position - robot_pos)) for p in world.pedestrians]
        order = np.argsort(dists, kind="stable")[:k]
        for slot, idx in enumerate(order):
            positions[slot] = world.pedestrians[idx].position
            velocities[slot] = world.pedestrians[idx].velocity
            mask[slot] = True
    return positions, velocities, mask
