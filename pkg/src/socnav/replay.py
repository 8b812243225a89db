"""Experience storage: transition records, the replay buffer, dataset files.

A transition carries everything the trainers consume: the feature vector,
the executed plan, the scalar reward, event bookkeeping, and the robot-frame
scene needed to re-score the plan against the trajectory objective at update
time.  Records are a numpy structured dtype so a dataset is a single array
and a dataset file is a single deterministic .npy.
"""

from __future__ import annotations

import numpy as np

from .features import FEATURE_DIM, N_PED_SLOTS
from .objective import HORIZON

N_CLOUD_POINTS = 64
ONLINE_CAPACITY = 50_000

TRANSITION_DTYPE = np.dtype(
    [
        ("features", np.float64, (FEATURE_DIM,)),
        ("plan", np.float64, (HORIZON, 2)),
        ("reward", np.float64),
        ("features_next", np.float64, (FEATURE_DIM,)),
        ("done", np.bool_),
        ("collision", np.bool_),
        ("collision_static", np.bool_),
        ("collision_object", np.bool_),
        ("collision_pedestrian", np.bool_),
        ("bumpy", np.bool_),
        ("ped_violation", np.bool_),
        ("d_h", np.float64),
        ("d_s", np.float64),
        # Scene payload, robot frame, for re-evaluating the trajectory score.
        ("goal", np.float64, (3,)),
        ("cloud", np.float64, (N_CLOUD_POINTS, 2)),
        ("ped_pos", np.float64, (N_PED_SLOTS, 2)),
        ("ped_vel", np.float64, (N_PED_SLOTS, 2)),
        ("ped_mask", np.bool_, (N_PED_SLOTS,)),
        ("prev_action", np.float64, (2,)),
        # Global-frame poses kept for audits (flags must be re-derivable).
        ("robot_pose", np.float64, (3,)),
        ("goal_pose", np.float64, (3,)),
    ]
)


def make_transition(
    features,
    plan,
    reward,
    features_next,
    done,
    flags,
    scene,
    robot_pose,
    goal_pose,
) -> np.ndarray:
    """Pack one step into a length-1 structured array."""
    rec = np.zeros(1, dtype=TRANSITION_DTYPE)
    rec["features"] = features
    rec["plan"] = plan
    rec["reward"] = reward
    rec["features_next"] = features_next
    rec["done"] = done
    for name in (
        "collision",
        "collision_static",
        "collision_object",
        "collision_pedestrian",
        "bumpy",
        "ped_violation",
        "d_h",
        "d_s",
    ):
        rec[name] = getattr(flags, name)
    rec["goal"] = scene["goal"]
    rec["cloud"] = scene["cloud"]
    rec["ped_pos"] = scene["ped_pos"]
    rec["ped_vel"] = scene["ped_vel"]
    rec["ped_mask"] = scene["ped_mask"]
    rec["prev_action"] = scene["prev_action"]
    rec["robot_pose"] = robot_pose
    rec["goal_pose"] = goal_pose
    if not np.isfinite(rec["reward"][0]):
        raise ValueError(f"non-finite reward {reward!r} in transition")
    return rec


def scene_from_batch(batch: np.ndarray) -> dict:
    """Scene arrays of a batch, shaped for the batched objective."""
    return {
        "goal": batch["goal"],
        "cloud": batch["cloud"],
        "ped_pos": batch["ped_pos"],
        "ped_vel": batch["ped_vel"],
        "ped_mask": batch["ped_mask"],
        "prev_action": batch["prev_action"],
    }


def save_dataset(path, records: np.ndarray) -> None:
    if records.dtype != TRANSITION_DTYPE:
        raise ValueError("records must use the transition dtype")
    with open(path, "wb") as fh:
        np.save(fh, records)


def load_dataset(path) -> np.ndarray:
    records = np.load(path)
    if records.dtype != TRANSITION_DTYPE:
        raise ValueError(f"{path} is not a transition dataset")
    return records


class ReplayBuffer:
    """Two partitions: a frozen offline dataset and an online ring.

    Batches are drawn half from each partition whenever both hold data
    (indices with replacement, so a barely-started online partition still
    fills its half).  With one partition empty the whole batch comes from
    the other.
    """

    def __init__(self, capacity: int = ONLINE_CAPACITY, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._rng = rng if rng is not None else np.random.default_rng()
        self._offline = np.zeros(0, dtype=TRANSITION_DTYPE)
        self._online = np.zeros(self.capacity, dtype=TRANSITION_DTYPE)
        self._write = 0
        self._count = 0

    @property
    def n_offline(self) -> int:
        return len(self._offline)

    @property
    def n_online(self) -> int:
        return min(self._count, self.capacity)

    def load_offline(self, records: np.ndarray) -> None:
        if self.n_offline:
            raise RuntimeError("offline partition already loaded")
        if records.dtype != TRANSITION_DTYPE:
            raise ValueError("records must use the transition dtype")
        self._offline = records.copy()
        self._offline.setflags(write=False)

    def append(self, record: np.ndarray) -> None:
        if record.dtype != TRANSITION_DTYPE or record.shape != (1,):
            raise ValueError("append expects a single transition record")
        self._online[self._write] = record[0]
        self._write = (self._write + 1) % self.capacity
        self._count += 1

    def sample(self, batch_size: int = 76) -> np.ndarray:
        n_off, n_on = self.n_offline, self.n_online
        if n_off == 0 and n_on == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        if n_off == 0:
            return self._online[self._rng.integers(0, n_on, size=batch_size)]
        if n_on == 0:
            return self._offline[self._rng.integers(0, n_off, size=batch_size)]
        half = batch_size // 2
        idx_off = self._rng.integers(0, n_off, size=half)
        idx_on = self._rng.integers(0, n_on, size=batch_size - half)
        return np.concatenate([self._offline[idx_off], self._online[idx_on]])
