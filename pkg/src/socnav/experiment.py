"""Online fine-tuning runs: one executed action, then a burst of trainer steps.

The runner owns the full lifecycle of a study run: collect the expert
dataset, pretrain whatever the chosen method needs, then interleave the
deployment loop with training at a fixed ratio of trainer steps per
environment step.  The behavior policy is a snapshot of the learner,
refreshed every sync_every trainer steps, so a burst of updates never
changes the plan mid-flight.

Everything is a pure function of (config, seed): all randomness flows from
one seed sequence, the loop is single threaded, and the CSV writers pin
their float formatting, so rerunning a config reproduces every output file
byte for byte.

Laps are the unit of evaluation.  A lap closes when the course tracker
counts another full circuit; its trace folds into one LapRecord, a lap with
no teleoperator resets counts as a success, and the small obstacles are
relaid for the next circuit.  A run ends after `laps` circuits or
`max_env_steps` executed actions, whichever comes first.  If training
diverges, whatever logs exist are flushed before the error propagates.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import METHODS, Method, build_method
from .dataset import generate_offline_dataset
from .metrics import LapRecord, StepSample, accumulate_metrics, summarize, write_lap_csv
from .nets import save_checkpoint
from .objective import ObjectiveWeights
from .replay import ReplayBuffer, save_dataset
from .scenario import Scenario, load_scenario
from .session import EnvSession
from .trainer import TRAIN_LOG_COLUMNS, TrainerConfig, TrainingDiverged

PRETRAINED_METHODS = ("ours", "sacson_ft", "residual", "residual_dagger", "td3bc_td3")


class ConfigError(ValueError):
    """Bad run configuration, detected before anything starts."""


@dataclass
class ExperimentConfig:
    scenario: str = ""
    method: str = "ours"
    seed: int = 0
    laps: int = 15
    max_env_steps: int = 21600  # 2 hours of control at 3 Hz
    steps_per_env_step: int = 4
    sync_every: int = 50  # trainer steps between behavior-policy snapshots
    checkpoint_every: int = 1000
    offline_steps: int = 2000  # expert transitions collected before the run
    expert_fraction: float = 0.8
    pretrain_epochs: int = 40
    offline_update_steps: int = 2000  # cloning-phase length (td3bc_td3 only)
    with_objects: bool = True
    explore: bool = True
    train: bool = True
    trainer: TrainerConfig = field(default_factory=TrainerConfig)


def _build_trainer_config(raw: dict) -> TrainerConfig:
    raw = dict(raw)
    weights = raw.pop("objective_weights", None)
    try:
        if weights is not None:
            raw["objective_weights"] = ObjectiveWeights(**weights)
        return TrainerConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad trainer config: {exc}") from exc


def load_experiment_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a run config from YAML; overrides (CLI flags) win over the file."""
    import yaml

    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")

    raw.update(overrides or {})
    trainer = raw.pop("trainer", None)
    try:
        cfg = ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    if trainer is not None:
        cfg.trainer = _build_trainer_config(trainer)
    # Scenario paths are relative to the config file, not the caller's cwd.
    if isinstance(cfg.scenario, str) and cfg.scenario and not Path(cfg.scenario).is_absolute():
        cfg.scenario = str((Path(path).parent / cfg.scenario).resolve())
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; expected one of {', '.join(METHODS)}")
    if not cfg.scenario:
        raise ConfigError("config needs a scenario path")
    if cfg.laps <= 0 or cfg.max_env_steps <= 0:
        raise ConfigError("laps and max_env_steps must be positive")
    if cfg.steps_per_env_step < 0 or cfg.sync_every <= 0 or cfg.checkpoint_every <= 0:
        raise ConfigError("step ratios and periods must be positive")
    if cfg.offline_steps < 0 or cfg.offline_update_steps < 0 or cfg.pretrain_epochs < 0:
        raise ConfigError("offline sizes must be non-negative")
    if not 0.0 <= cfg.expert_fraction <= 1.0:
        raise ConfigError("expert_fraction must be within [0, 1]")
    if cfg.offline_steps == 0 and cfg.method in PRETRAINED_METHODS:
        raise ConfigError(f"{cfg.method} needs offline data; set offline_steps > 0")


def _resolve_scenario(cfg: ExperimentConfig) -> Scenario:
    if isinstance(cfg.scenario, Scenario):
        return cfg.scenario
    try:
        return load_scenario(cfg.scenario)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad scenario {cfg.scenario}: {exc}") from exc


def write_training_log(rows: list[dict], path) -> None:
    """Fixed six-digit floats so reruns are byte-stable."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAIN_LOG_COLUMNS)
        for row in rows:
            out = []
            for name in TRAIN_LOG_COLUMNS:
                value = row[name]
                out.append(str(value) if name == "step" else f"{value:.6f}")
            writer.writerow(out)


def _config_echo(cfg: ExperimentConfig, scenario: Scenario) -> dict:
    echo = dataclasses.asdict(cfg)
    echo["scenario"] = scenario.name if isinstance(cfg.scenario, Scenario) else str(cfg.scenario)
    return echo


class RunState:
    """Mutable progress of one run; kept so partial logs survive a crash."""

    def __init__(self):
        self.lap_records: list[LapRecord] = []
        self.trainer_rows: list[dict] = []
        self.env_steps = 0
        self.interventions = 0
        self.diverged: str | None = None


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    validate_config(cfg)
    scenario = _resolve_scenario(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(cfg.seed)
    data_ss, method_ss, replay_ss, session_ss, explore_ss = root.spawn(5)

    # Methods that never look at expert data skip the collection drive.
    n_offline = cfg.offline_steps if cfg.method in PRETRAINED_METHODS else 0
    dataset = generate_offline_dataset(
        scenario,
        n_offline,
        data_ss,
        expert_fraction=cfg.expert_fraction,
        with_objects=cfg.with_objects,
    )
    method = build_method(
        cfg.method,
        dataset,
        method_ss,
        config=cfg.trainer,
        pretrain_epochs=cfg.pretrain_epochs,
        offline_update_steps=cfg.offline_update_steps,
    )

    replay = ReplayBuffer(rng=np.random.default_rng(replay_ss))
    if len(dataset) and (method.uses_offline_replay or method.offline_update_steps):
        replay.load_offline(dataset)

    session = EnvSession(scenario, rng=np.random.default_rng(session_ss), with_objects=cfg.with_objects)
    explore_rng = np.random.default_rng(explore_ss)
    state = RunState()

    try:
        if cfg.train and method.trains:
            for _ in range(method.offline_update_steps):
                state.trainer_rows.append(method.train(replay.sample(cfg.trainer.batch_size)))
        method.finish_offline_phase()
        method.sync()
        _online_loop(cfg, method, replay, session, explore_rng, state, out)
    except TrainingDiverged as exc:
        state.diverged = str(exc)
        raise
    finally:
        # Flush whatever was collected even when training blows up.
        summary = _write_outputs(cfg, scenario, method, session, state, out)
    return summary


def _online_loop(
    cfg: ExperimentConfig,
    method: Method,
    replay: ReplayBuffer,
    session: EnvSession,
    explore_rng: np.random.Generator,
    state: RunState,
    out: Path,
) -> None:
    trace: list[StepSample] = []
    lap_interventions = 0
    laps_done = 0
    checkpoint_dir = out / "checkpoints"
    done_steps = method.core.step_count if method.trains else 0  # offline phase counts
    next_checkpoint = (done_steps // cfg.checkpoint_every + 1) * cfg.checkpoint_every

    while laps_done < cfg.laps and state.env_steps < cfg.max_env_steps:
        obs = session.observe()
        plan = method.act(obs, explore=cfg.explore, rng=explore_rng)
        record, sample = session.step(plan, obs)
        state.env_steps += 1
        trace.append(sample)

        verdict = session.poll_intervention()
        if verdict.triggered:
            record["done"] = True
            session.apply_reset(verdict)
            lap_interventions += 1
            state.interventions += 1

        replay.append(record)

        if cfg.train and method.trains:
            for _ in range(cfg.steps_per_env_step):
                state.trainer_rows.append(method.train(replay.sample(cfg.trainer.batch_size)))
                steps = method.core.step_count
                if steps % cfg.sync_every == 0:
                    method.sync()
                if steps >= next_checkpoint:
                    checkpoint_dir.mkdir(exist_ok=True)
                    save_checkpoint(checkpoint_dir / f"step_{steps:06d}.npz", method.core.networks())
                    next_checkpoint += cfg.checkpoint_every

        if session.tracker.laps_completed > laps_done:
            laps_done = session.tracker.laps_completed
            # A completed circuit counts as a success even when the teleoperator
            # had to step in; interventions are scored separately.
            state.lap_records.append(
                accumulate_metrics(
                    trace,
                    lap=laps_done,
                    optimal_length=session.course.lap_length(),
                    interventions=lap_interventions,
                    success=True,
                )
            )
            trace = []
            lap_interventions = 0
            session.reshuffle_objects()


def _write_outputs(
    cfg: ExperimentConfig,
    scenario: Scenario,
    method: Method,
    session: EnvSession,
    state: RunState,
    out: Path,
) -> dict:
    write_lap_csv(state.lap_records, out / "laps.csv")
    if state.trainer_rows:
        write_training_log(state.trainer_rows, out / "training_log.csv")
    if method.trains:
        checkpoint_dir = out / "checkpoints"
        checkpoint_dir.mkdir(exist_ok=True)
        save_checkpoint(checkpoint_dir / "final.npz", method.core.networks())

    summary = {
        "config": _config_echo(cfg, scenario),
        "laps": summarize(state.lap_records),
        "interventions_per_lap": [r.interventions for r in state.lap_records],
        "env_steps": state.env_steps,
        "trainer_steps": method.core.step_count if method.trains else 0,
        "interventions_total": state.interventions,
        "diverged": state.diverged,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def pretrain_only(cfg: ExperimentConfig, out_dir) -> dict:
    """The pretrain entry point: save the amortized actor and a manifest.

    Seeds are split exactly as in run_experiment, so the saved actor is bit
    for bit the one an `ours` run with the same config would start from.
    """
    from .objective import HORIZON, score_batch
    from .trainer import plans_from_normalized, pretrain_actor

    validate_config(cfg)
    scenario = _resolve_scenario(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(cfg.seed)
    data_ss, method_ss = root.spawn(5)[:2]
    dataset = generate_offline_dataset(
        scenario, cfg.offline_steps, data_ss, expert_fraction=cfg.expert_fraction
    )
    pretrain_ss = method_ss.spawn(2)[0]
    actor = pretrain_actor(
        dataset, cfg.pretrain_epochs, pretrain_ss, weights=cfg.trainer.objective_weights
    )
    save_checkpoint(out / "actor.npz", {"actor": actor})

    norm = actor(dataset["features"])
    plans = plans_from_normalized(norm.reshape(len(dataset), HORIZON, 2))
    scores = score_batch(
        np.zeros((len(dataset), 3)),
        plans,
        dataset["goal"],
        dataset["cloud"],
        dataset["ped_pos"],
        dataset["ped_vel"],
        dataset["ped_mask"],
        dataset["prev_action"],
        cfg.trainer.objective_weights,
        cfg.trainer.gamma,
    )
    manifest = {
        "scenario": scenario.name,
        "seed": cfg.seed,
        "epochs": cfg.pretrain_epochs,
        "dataset_steps": len(dataset),
        "mean_plan_score": float(np.mean(scores)),
    }
    with open(out / "pretrain.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def plan_demo(cfg: ExperimentConfig, out_dir) -> dict:
    """The plan-demo entry point: score the primitives once at the start pose."""
    import csv

    from .planner import FILTER_COST, PRIMITIVES, plan_from_scene

    scenario = _resolve_scenario(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    session_ss = np.random.SeedSequence(cfg.seed).spawn(4)[3]
    session = EnvSession(scenario, rng=np.random.default_rng(session_ss), with_objects=cfg.with_objects)
    decision = plan_from_scene(session.observe()["scene"])

    with open(out / "primitives.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "v", "omega", "cost", "filtered", "chosen"])
        for i, (v, omega) in enumerate(PRIMITIVES):
            writer.writerow(
                [
                    i,
                    f"{v:.6f}",
                    f"{omega:.6f}",
                    f"{decision.costs[i]:.6f}",
                    int(decision.costs[i] >= FILTER_COST),
                    int(i == decision.index and not decision.boxed_in),
                ]
            )
    result = {
        "scenario": scenario.name,
        "index": decision.index,
        "action": [float(a) for a in decision.action],
        "boxed_in": decision.boxed_in,
    }
    with open(out / "plan_demo.json", "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return result


def collect_offline(cfg: ExperimentConfig, out_dir) -> dict:
    """The collect-offline entry point: expert dataset plus a small manifest."""
    validate_config(cfg)
    scenario = _resolve_scenario(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data_ss = np.random.SeedSequence(cfg.seed).spawn(1)[0]
    dataset = generate_offline_dataset(
        scenario, cfg.offline_steps, data_ss, expert_fraction=cfg.expert_fraction
    )
    save_dataset(out / "dataset.npy", dataset)
    manifest = {
        "scenario": scenario.name,
        "seed": cfg.seed,
        "steps": len(dataset),
        "expert_fraction": cfg.expert_fraction,
        "mean_reward": float(np.mean(dataset["reward"])) if len(dataset) else 0.0,
    }
    with open(out / "dataset.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
