"""Offline experience collection: a scripted expert drives the course.

The expert is the sampling planner; a configurable fraction of steps instead
executes a noise-perturbed copy of its plan so the dataset covers more of
action space than clean driving would.  The perturbation is drawn once and
held for a burst of consecutive steps: independent per-step twitches cancel
out and never carry the robot anywhere, while a held offset commits to a
deviation long enough to reach states clean driving cannot.  Rewards, flags,
and scenes come from the same session plumbing the online phase uses, so
offline and online rows are interchangeable in the replay buffer.
"""

from __future__ import annotations

import numpy as np

from .geometry import ACTION_HIGH, ACTION_LOW, clip_action
from .objective import HORIZON
from .planner import plan_from_scene
from .replay import TRANSITION_DTYPE
from .scenario import Scenario
from .session import EnvSession

PERTURB_SIGMA = 0.3  # fraction of the action range, drawn once per burst
BURST_STEPS = (3, 8)  # integers() bounds for how many steps an offset is held


def expert_plan(scene: dict) -> np.ndarray:
    """The planner's twist held for the whole horizon."""
    decision = plan_from_scene(scene)
    return np.tile(decision.action, (HORIZON, 1))


def generate_offline_dataset(
    scenario: Scenario,
    n_steps: int,
    seed: int,
    expert_fraction: float = 0.8,
    with_objects: bool = False,
) -> np.ndarray:
    """Collect n_steps transitions; deterministic in seed."""
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if not 0.0 <= expert_fraction <= 1.0:
        raise ValueError("expert_fraction must be in [0, 1]")
    records = np.zeros(n_steps, dtype=TRANSITION_DTYPE)
    if n_steps == 0:
        return records

    root = np.random.default_rng(seed)
    session_rng, choice_rng, noise_rng = root.spawn(3)
    session = EnvSession(scenario, rng=session_rng, with_objects=with_objects)

    sigma = PERTURB_SIGMA * (ACTION_HIGH - ACTION_LOW)
    # start probability chosen so the long-run perturbed share of steps is
    # 1 - expert_fraction despite each burst covering several steps
    mean_burst = (BURST_STEPS[0] + BURST_STEPS[1] - 1) / 2.0
    p_start = min(1.0, (1.0 - expert_fraction) / max(mean_burst * expert_fraction, 1e-9))
    burst_left = 0
    offset = np.zeros(2)
    for i in range(n_steps):
        obs = session.observe()
        plan = expert_plan(obs["scene"])
        if burst_left == 0 and choice_rng.random() < p_start:
            burst_left = int(choice_rng.integers(*BURST_STEPS))
            offset = noise_rng.normal(0.0, sigma)
        if burst_left > 0:
            plan = np.array([clip_action(a + offset) for a in plan])
            burst_left -= 1
        record, _ = session.step(plan, obs)

        verdict = session.poll_intervention()
        if verdict.triggered:
            record["done"] = True
            session.apply_reset(verdict)
        records[i] = record[0]
    return records
