"""Per-lap evaluation bookkeeping.

A lap trace is a sequence of StepSample records; accumulate_metrics folds it
into one LapRecord.  Durations integrate indicator functions over the step
period, counts are rising edges (one contact episode counts once however many
steps it lasts), and the two success-weighted ratios compare the lap against
the course's optimal path length and time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .geometry import V_MAX
from .world import DT, EventFlags, PERSONAL_DISTANCE, ROBOT_RADIUS

NEAR_COLLISION_MARGIN = 0.1  # added to the robot radius for the NCO band


@dataclass
class StepSample:
    flags: EventFlags
    on_patch: bool = False
    distance: float = 0.0  # meters moved this step
    dt: float = DT


@dataclass
class LapRecord:
    lap: int
    idv_s: float = 0.0
    nco_s: float = 0.0
    ufs_s: float = 0.0
    collisions_pedestrian: int = 0
    collisions_object: int = 0
    interventions: int = 0
    success: bool = False
    path_length: float = 0.0
    elapsed_s: float = 0.0
    spl: float = 0.0
    stl: float = 0.0


LAP_CSV_COLUMNS = [f.name for f in fields(LapRecord)]


def accumulate_metrics(
    steps,
    lap: int = 0,
    optimal_length: float | None = None,
    v_max: float = V_MAX,
    interventions: int = 0,
    success: bool = True,
) -> LapRecord:
    """Fold a lap trace into a LapRecord.

    optimal_length is the course's lap length; when omitted the realized path
    is treated as optimal (useful for single-segment unit checks).  An empty
    trace yields a zeroed, unsuccessful record.
    """
    record = LapRecord(lap=lap, interventions=interventions)
    if not steps:
        return record

    prev_ped = False
    prev_obj = False
    for s in steps:
        f = s.flags
        if f.d_h < PERSONAL_DISTANCE:
            record.idv_s += s.dt
        if f.d_s < ROBOT_RADIUS + NEAR_COLLISION_MARGIN:
            record.nco_s += s.dt
        if s.on_patch:
            record.ufs_s += s.dt
        if f.collision_pedestrian and not prev_ped:
            record.collisions_pedestrian += 1
        if f.collision_object and not prev_obj:
            record.collisions_object += 1
        prev_ped = f.collision_pedestrian
        prev_obj = f.collision_object
        record.path_length += s.distance
        record.elapsed_s += s.dt

    record.success = bool(success)
    s_weight = 1.0 if record.success else 0.0
    optimal = record.path_length if optimal_length is None else float(optimal_length)
    if optimal > 0.0:
        record.spl = s_weight * optimal / max(record.path_length, optimal)
        t_star = optimal / v_max
        record.stl = s_weight * t_star / max(record.elapsed_s, t_star)
    return record


def write_lap_csv(records, path) -> None:
    """One row per lap; floats fixed to 6 digits so reruns are byte-stable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LAP_CSV_COLUMNS)
        for r in records:
            row = []
            for name in LAP_CSV_COLUMNS:
                value = getattr(r, name)
                if isinstance(value, bool):
                    row.append(int(value))
                elif isinstance(value, float):
                    row.append(f"{value:.6f}")
                else:
                    row.append(value)
            writer.writerow(row)


def read_lap_csv(path) -> list:
    """Inverse of write_lap_csv."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                LapRecord(
                    lap=int(row["lap"]),
                    idv_s=float(row["idv_s"]),
                    nco_s=float(row["nco_s"]),
                    ufs_s=float(row["ufs_s"]),
                    collisions_pedestrian=int(row["collisions_pedestrian"]),
                    collisions_object=int(row["collisions_object"]),
                    interventions=int(row["interventions"]),
                    success=bool(int(row["success"])),
                    path_length=float(row["path_length"]),
                    elapsed_s=float(row["elapsed_s"]),
                    spl=float(row["spl"]),
                    stl=float(row["stl"]),
                )
            )
    return out


def summarize(records) -> dict:
    """Aggregate means and standard deviations over laps, for the summary file."""
    if not records:
        return {"laps": 0}
    numeric = {
        "idv_s": [r.idv_s for r in records],
        "nco_s": [r.nco_s for r in records],
        "ufs_s": [r.ufs_s for r in records],
        "collisions_pedestrian": [r.collisions_pedestrian for r in records],
        "collisions_object": [r.collisions_object for r in records],
        "interventions": [r.interventions for r in records],
        "path_length": [r.path_length for r in records],
        "elapsed_s": [r.elapsed_s for r in records],
        "spl": [r.spl for r in records],
        "stl": [r.stl for r in records],
    }
    out = {"laps": len(records), "success_rate": float(np.mean([r.success for r in records]))}
    for key, values in numeric.items():
        out[f"{key}_mean"] = float(np.mean(values))
        out[f"{key}_std"] = float(np.std(values))
    return out
