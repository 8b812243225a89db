import json

import numpy as np
import pytest

from socnav.dataset import generate_offline_dataset
from socnav.experiment import (
    ConfigError,
    ExperimentConfig,
    collect_offline,
    load_experiment_config,
    run_experiment,
    validate_config,
)
from socnav.metrics import read_lap_csv
from socnav.nets import load_checkpoint
from socnav.objective import ObjectiveWeights
from socnav.replay import load_dataset
from socnav.trainer import TRAIN_LOG_COLUMNS, TrainerConfig, TrainingDiverged


def tiny_config(scenario_path, **kw) -> ExperimentConfig:
    cfg = ExperimentConfig(
        scenario=str(scenario_path),
        method="ours",
        seed=5,
        laps=1,
        max_env_steps=220,
        offline_steps=80,
        pretrain_epochs=2,
        offline_update_steps=0,
        checkpoint_every=300,
        trainer=TrainerConfig(critic_ramp_steps=100),
    )
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


@pytest.fixture(scope="module")
def tiny_run(mini_scenario_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "a"
    cfg = tiny_config(mini_scenario_path)
    summary = run_experiment(cfg, out)
    return cfg, out, summary


def test_run_produces_the_full_artifact_set(tiny_run):
    _, out, summary = tiny_run
    laps = read_lap_csv(out / "laps.csv")
    assert summary["laps"]["laps"] == len(laps) == 1
    assert laps[0].path_length > 10.0
    assert summary["env_steps"] <= 220
    assert summary["trainer_steps"] == summary["env_steps"] * 4
    assert summary["diverged"] is None
    assert summary["config"]["method"] == "ours"

    with open(out / "training_log.csv") as fh:
        header = fh.readline().strip().split(",")
        first = fh.readline().strip().split(",")
    assert header == TRAIN_LOG_COLUMNS
    assert first[0] == "1"

    nets = load_checkpoint(out / "checkpoints" / "final.npz")
    assert set(nets) == {
        "actor",
        "critic_1",
        "critic_2",
        "target_actor",
        "target_critic_1",
        "target_critic_2",
    }
    numbered = sorted((out / "checkpoints").glob("step_*.npz"))
    assert numbered, "periodic checkpoints missing"
    assert numbered[0].name == "step_000300.npz"


def test_rerun_is_byte_identical(tiny_run, tmp_path):
    cfg, out, _ = tiny_run
    again = tmp_path / "b"
    run_experiment(cfg, again)
    for name in ("laps.csv", "training_log.csv", "summary.json"):
        assert (out / name).read_bytes() == (again / name).read_bytes(), name


def test_planner_method_runs_without_training(mini_scenario_path, tmp_path):
    cfg = tiny_config(mini_scenario_path, method="planner", offline_steps=0, max_env_steps=400)
    summary = run_experiment(cfg, tmp_path)
    assert summary["trainer_steps"] == 0
    assert not (tmp_path / "training_log.csv").exists()
    assert not (tmp_path / "checkpoints").exists()
    assert summary["laps"]["laps"] == 1
    assert summary["interventions_total"] == 0


def test_eval_mode_freezes_the_policy(mini_scenario_path, tmp_path):
    cfg = tiny_config(mini_scenario_path, train=False, explore=False, max_env_steps=60, laps=1)
    summary = run_experiment(cfg, tmp_path)
    assert summary["trainer_steps"] == 0
    assert not (tmp_path / "training_log.csv").exists()
    assert summary["env_steps"] == 60


def test_env_step_budget_cuts_the_run(mini_scenario_path, tmp_path):
    cfg = tiny_config(mini_scenario_path, max_env_steps=40, laps=5)
    summary = run_experiment(cfg, tmp_path)
    assert summary["env_steps"] == 40
    assert summary["laps"]["laps"] == 0


def test_divergence_still_writes_partial_logs(mini_scenario_path, tmp_path):
    cfg = tiny_config(
        mini_scenario_path,
        method="td3bc_td3",
        offline_update_steps=30,
        trainer=TrainerConfig(actor_mode="critic_only", lr=float("nan")),
    )
    with pytest.raises(TrainingDiverged):
        run_experiment(cfg, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["diverged"] is not None
    assert (tmp_path / "laps.csv").exists()


def test_collect_offline_matches_direct_generation(mini_scenario, mini_scenario_path, tmp_path):
    cfg = tiny_config(mini_scenario_path, offline_steps=60)
    manifest = collect_offline(cfg, tmp_path)
    saved = load_dataset(tmp_path / "dataset.npy")
    assert manifest["steps"] == len(saved) == 60

    direct = generate_offline_dataset(
        mini_scenario, 60, np.random.SeedSequence(cfg.seed).spawn(1)[0], expert_fraction=0.8
    )
    assert np.array_equal(saved, direct)


# -- config loading ----------------------------------------------------------


def test_config_file_round_trip(mini_scenario_path, tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        f"""
scenario: {mini_scenario_path}
method: sacson_ft
seed: 7
laps: 3
trainer:
  gamma: 0.9
  critic_ramp_steps: 123
  objective_weights:
    crowd: 3.5
"""
    )
    cfg = load_experiment_config(path, {"laps": 9})
    assert cfg.method == "sacson_ft"
    assert cfg.seed == 7
    assert cfg.laps == 9, "flag overrides lose to the file"
    assert cfg.trainer.gamma == 0.9
    assert cfg.trainer.critic_ramp_steps == 123
    assert cfg.trainer.objective_weights.crowd == 3.5
    # fields absent from the file keep their defaults
    assert cfg.trainer.objective_weights.pose == ObjectiveWeights().pose


def test_scenario_path_resolves_against_config_dir(tmp_path):
    (tmp_path / "maps").mkdir()
    (tmp_path / "maps" / "site.yaml").write_text("name: x\ncourse:\n  waypoints: [[0,0],[4,0]]\n")
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text("scenario: maps/site.yaml\nmethod: planner\n")
    cfg = load_experiment_config(cfg_path)
    assert cfg.scenario == str(tmp_path / "maps" / "site.yaml")


@pytest.mark.parametrize(
    "body,message",
    [
        ("method: dqn\nscenario: s.yaml\n", "unknown method"),
        ("method: ours\n", "scenario"),
        ("scenario: s.yaml\nlaps: 0\n", "positive"),
        ("scenario: s.yaml\nexpert_fraction: 1.5\n", "expert_fraction"),
        ("scenario: s.yaml\nbanana: 1\n", "bad config"),
        ("scenario: s.yaml\ntrainer:\n  banana: 1\n", "bad trainer config"),
        ("- just\n- a list\n", "mapping"),
    ],
)
def test_bad_configs_are_rejected(tmp_path, body, message):
    path = tmp_path / "bad.yaml"
    path.write_text(body)
    with pytest.raises(ConfigError, match=message):
        load_experiment_config(path)


def test_missing_config_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_experiment_config(tmp_path / "nope.yaml")


def test_pretrained_methods_require_offline_data(mini_scenario_path):
    cfg = tiny_config(mini_scenario_path, offline_steps=0)
    with pytest.raises(ConfigError, match="offline data"):
        validate_config(cfg)


def test_bad_scenario_reference_fails_before_the_run(tmp_path):
    cfg = ExperimentConfig(scenario=str(tmp_path / "ghost.yaml"), method="planner")
    with pytest.raises(ConfigError, match="bad scenario"):
        run_experiment(cfg, tmp_path)
