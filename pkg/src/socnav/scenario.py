"""Scenario files: the single human-readable description of a test site.

A scenario YAML carries the static geometry, the course (either explicit node
poses or a waypoint polyline densified at a fixed spacing), fiducial marker
placement, pedestrian routes, bumpy patches, the small-object distribution,
and localization noise levels.  Everything derived from it (course nodes,
marker registry, object draws) is deterministic given the file plus a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .course import TopoCourse
from .geometry import ObstacleSet, Pose2, wrap_angle
from .world import Pedestrian, WorldState


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""


@dataclass
class MarkerSpec:
    """One fiducial: its world pose and the robot pose it was mapped from."""

    marker_pose: Pose2
    mapping_pose: Pose2


@dataclass
class Scenario:
    name: str
    obstacles: ObstacleSet
    course_waypoints: np.ndarray | None
    course_nodes: list | None
    course_loop: bool
    course_spacing: float
    start_pose: Pose2
    pedestrian_specs: list
    bumpy_patches: list
    object_count: int
    object_radius: float
    object_max_offset: float
    object_node_clearance: float
    marker_spacing: float
    marker_lateral_offset: float
    marker_poses_explicit: list | None
    sigma_translation: float
    sigma_rotation: float
    marker_range: float
    marker_bearing: float


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ScenarioError("scenario file must be a mapping")
    try:
        return _parse(raw)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bad scenario file {path}: {exc}") from exc


def _parse(raw: dict) -> Scenario:
    obstacles_raw = raw.get("obstacles", {}) or {}
    obstacles = ObstacleSet(
        circles=np.asarray(obstacles_raw.get("circles", []), dtype=float).reshape(-1, 3),
        polygons=[np.asarray(p, dtype=float) for p in obstacles_raw.get("polygons", [])],
    )

    course_raw = raw["course"]
    loop = bool(course_raw.get("loop", False))
    spacing = float(course_raw.get("spacing", 1.5))
    waypoints = None
    nodes = None
    if "waypoints" in course_raw:
        waypoints = np.asarray(course_raw["waypoints"], dtype=float).reshape(-1, 2)
        if len(waypoints) < 2:
            raise ScenarioError("course needs at least two waypoints")
    elif "nodes" in course_raw:
        nodes = [Pose2(*n) for n in course_raw["nodes"]]
    else:
        raise ScenarioError("course needs 'waypoints' or 'nodes'")

    peds = []
    for spec in raw.get("pedestrians", []) or []:
        peds.append(
            {
                "start": np.asarray(spec["start"], dtype=float).reshape(2),
                "waypoints": np.asarray(spec["waypoints"], dtype=float).reshape(-1, 2),
            }
        )

    objects_raw = raw.get("small_objects", {}) or {}
    markers_raw = raw.get("markers", {}) or {}
    loc_raw = raw.get("localization", {}) or {}

    start = raw.get("start_pose")
    if start is None:
        if waypoints is None:
            start_pose = nodes[0]
        else:
            direction = waypoints[1] - waypoints[0]
            start_pose = Pose2(waypoints[0][0], waypoints[0][1], float(np.arctan2(direction[1], direction[0])))
    else:
        start_pose = Pose2(*start)

    return Scenario(
        name=str(raw.get("name", "scenario")),
        obstacles=obstacles,
        course_waypoints=waypoints,
        course_nodes=nodes,
        course_loop=loop,
        course_spacing=spacing,
        start_pose=start_pose,
        pedestrian_specs=peds,
        bumpy_patches=[np.asarray(p, dtype=float) for p in raw.get("bumpy_patches", []) or []],
        object_count=int(objects_raw.get("count", 0)),
        object_radius=float(objects_raw.get("radius", 0.12)),
        object_max_offset=float(objects_raw.get("max_lateral_offset", 0.45)),
        object_node_clearance=float(objects_raw.get("min_node_clearance", 0.75)),
        marker_spacing=float(markers_raw.get("spacing", 15.0)),
        marker_lateral_offset=float(markers_raw.get("lateral_offset", 1.2)),
        marker_poses_explicit=(
            [Pose2(*p) for p in markers_raw["poses"]] if "poses" in markers_raw else None
        ),
        sigma_translation=float(loc_raw.get("sigma_translation", 0.005)),
        sigma_rotation=float(loc_raw.get("sigma_rotation", 0.002)),
        marker_range=float(loc_raw.get("marker_range", 4.0)),
        marker_bearing=float(np.deg2rad(loc_raw.get("marker_bearing_deg", 60.0))),
    )


# ---------------------------------------------------------------------------
# Path parameterization along the course waypoints


def _path_vertices(scenario: Scenario) -> np.ndarray:
    if scenario.course_waypoints is not None:
        pts = scenario.course_waypoints
        if scenario.course_loop:
            pts = np.vstack([pts, pts[:1]])
        return pts
    return np.stack([n.position() for n in scenario.course_nodes])


def path_point(vertices: np.ndarray, station: float):
    """Point and tangent heading at an arc-length station along a polyline."""
    seg = np.diff(vertices, axis=0)
    lengths = np.linalg.norm(seg, axis=-1)
    total = float(lengths.sum())
    s = station % total if total > 0 else 0.0
    acc = 0.0
    for i, length in enumerate(lengths):
        if s <= acc + length + 1e-12:
            frac = (s - acc) / length if length > 0 else 0.0
            point = vertices[i] + frac * seg[i]
            heading = float(np.arctan2(seg[i][1], seg[i][0]))
            return point, heading
        acc += length
    return vertices[-1].copy(), float(np.arctan2(seg[-1][1], seg[-1][0]))


def build_course(scenario: Scenario) -> TopoCourse:
    """Densify the course waypoints into node poses at bounded spacing."""
    if scenario.course_nodes is not None:
        return TopoCourse(nodes=list(scenario.course_nodes), loop=scenario.course_loop)
    vertices = _path_vertices(scenario)
    seg = np.diff(vertices, axis=0)
    total = float(np.linalg.norm(seg, axis=-1).sum())
    n = max(2, int(np.ceil(total / scenario.course_spacing)))
    nodes = []
    for k in range(n + 1):
        station = total * k / n
        if scenario.course_loop and k == n:
            nodes.append(nodes[0])
            break
        # Clamp off the exact endpoint so the tangent comes from the last
        # real segment rather than the modulo wrap.
        point, heading = path_point(vertices, min(station, total - 1e-9))
        nodes.append(Pose2(point[0], point[1], heading))
    return TopoCourse(nodes=nodes, loop=scenario.course_loop)


def build_markers(scenario: Scenario) -> list:
    """Fiducial registry: poses every marker_spacing meters of path length.

    Each marker sits lateral_offset to the left of the path facing back at it;
    the mapping pose is the path pose 2.5 m before the marker's station, which
    is where a mapping run first gets a clean view.
    """
    if scenario.marker_poses_explicit is not None:
        markers = []
        vertices = _path_vertices(scenario)
        for pose in scenario.marker_poses_explicit:
            markers.append(MarkerSpec(marker_pose=pose, mapping_pose=_nearest_path_pose(vertices, pose)))
        return markers

    vertices = _path_vertices(scenario)
    seg = np.diff(vertices, axis=0)
    total = float(np.linalg.norm(seg, axis=-1).sum())
    markers = []
    station = 0.0
    while station < total - 1e-9:
        point, heading = path_point(vertices, station)
        normal = np.array([-np.sin(heading), np.cos(heading)])
        marker_pos = point + scenario.marker_lateral_offset * normal
        marker_pose = Pose2(marker_pos[0], marker_pos[1], wrap_angle(heading - np.pi / 2))
        map_point, map_heading = path_point(vertices, (station - 2.5) % total)
        markers.append(
            MarkerSpec(
                marker_pose=marker_pose,
                mapping_pose=Pose2(map_point[0], map_point[1], map_heading),
            )
        )
        station += scenario.marker_spacing
    return markers


def _nearest_path_pose(vertices: np.ndarray, pose: Pose2) -> Pose2:
    seg = np.diff(vertices, axis=0)
    lengths = np.linalg.norm(seg, axis=-1)
    total = float(lengths.sum())
    stations = np.linspace(0.0, total, 200)
    best, best_d = 0.0, np.inf
    for s in stations:
        point, _ = path_point(vertices, s)
        d = float(np.linalg.norm(point - pose.position()))
        if d < best_d:
            best, best_d = s, d
    point, heading = path_point(vertices, best)
    return Pose2(point[0], point[1], heading)


def place_small_objects(scenario: Scenario, course: TopoCourse, rng, avoid_pose: Pose2) -> np.ndarray:
    """Draw object positions near the course: a station along the path and a
    bounded lateral offset.  Draws that would sit on a course node (where
    teleoperator resets land), inside walls, or on the robot are rejected."""
    if scenario.object_count == 0:
        return np.zeros((0, 3))
    vertices = _path_vertices(scenario)
    seg = np.diff(vertices, axis=0)
    total = float(np.linalg.norm(seg, axis=-1).sum())
    node_positions = course.positions()
    out = []
    for _ in range(scenario.object_count):
        for _attempt in range(200):
            station = rng.uniform(0.0, total)
            offset = rng.uniform(-scenario.object_max_offset, scenario.object_max_offset)
            point, heading = path_point(vertices, station)
            normal = np.array([-np.sin(heading), np.cos(heading)])
            center = point + offset * normal
            if np.min(np.linalg.norm(node_positions - center, axis=-1)) < scenario.object_node_clearance:
                continue
            if not scenario.obstacles.is_empty() and scenario.obstacles.signed_distance(center) < scenario.object_radius + 0.05:
                continue
            if np.linalg.norm(center - avoid_pose.position()) < 1.2:
                continue
            out.append([center[0], center[1], scenario.object_radius])
            break
    return np.asarray(out, dtype=float).reshape(-1, 3)


def build_world(scenario: Scenario, with_objects: bool = False, rng=None) -> WorldState:
    peds = [
        Pedestrian(
            position=spec["start"].copy(),
            velocity=np.zeros(2),
            waypoints=spec["waypoints"].copy(),
        )
        for spec in scenario.pedestrian_specs
    ]
    world = WorldState(
        robot=scenario.start_pose,
        pedestrians=peds,
        obstacles=scenario.obstacles,
        bumpy_patches=list(scenario.bumpy_patches),
    )
    if with_objects and scenario.object_count:
        if rng is None:
            raise ValueError("object placement needs an rng")
        course = build_course(scenario)
        world.small_objects = place_small_objects(scenario, course, rng, scenario.start_pose)
    return world
