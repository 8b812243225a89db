"""Method registry: every policy/trainer pairing the experiment can run.

Each entry answers three questions the runner asks every step: what plan to
execute (a frozen policy snapshot, refreshed on sync), whether to add
exploration noise, and what a trainer step does.  The learned variants all
ride on TD3Core; the two residual entries wrap the learned net around a
frozen base policy, and the cloning entry adds an imitation term to the
actor objective while its offline phase lasts.

Entries:
  ours            pretrained actor, blended score + ramped critic objective
  residual        fixed base trained on the pose term only; the net learns a
                  correction on top of it, plain TD3 on the executed sum
  residual_dagger same machinery, but the base is the fully pretrained policy
  td3bc_td3       fresh nets; offline phase regularizes the actor toward the
                  dataset actions, online phase is plain TD3
  fastrlap        fresh nets, plain TD3, no pretraining at all
  sacson_ft       pretrained actor, keeps climbing the plan score online
  planner         the expert search, repeated out to a full plan; no learning
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import expert_plan
from .nets import Mlp
from .objective import ObjectiveWeights
from .trainer import (
    TD3Core,
    TrainerConfig,
    apply_exploration,
    plans_to_normalized,
    pretrain_actor,
)

METHODS = (
    "ours",
    "residual",
    "residual_dagger",
    "td3bc_td3",
    "fastrlap",
    "sacson_ft",
    "planner",
)


def pose_only_weights(weights: ObjectiveWeights) -> ObjectiveWeights:
    """Strip everything but goal progress; the residual base is trained on this."""
    return replace(weights, geometry=0.0, crowd=0.0, smooth=0.0)


class ResidualTD3Core(TD3Core):
    """TD3 on a correction around a frozen base policy.

    The executed plan is clip(base + net) in normalized units, so a zeroed
    net reproduces the base exactly and the critics always see the plan that
    actually ran.  Saturated clip components pass no gradient.
    """

    def __init__(self, rng, base: Mlp, config: TrainerConfig | None = None, **kwargs):
        config = config or TrainerConfig(actor_mode="critic_only")
        if config.actor_mode != "critic_only":
            raise ValueError("residual training is plain TD3; use critic_only mode")
        super().__init__(rng, config=config, **kwargs)
        self.base = base

    def compose_normalized(self, features: np.ndarray, raw_norm: np.ndarray):
        combined = self.base(np.asarray(features, dtype=float)) + raw_norm
        pass_mask = (np.abs(combined) < 1.0).astype(float)
        return np.clip(combined, -1.0, 1.0), pass_mask

    def networks(self) -> dict:
        nets = super().networks()
        nets["base"] = self.base
        return nets


class BcTd3Core(TD3Core):
    """TD3 whose actor is pulled toward the dataset actions while cloning is on.

    Offline the actor climbs Q minus bc_alpha / mean|Q| times the squared
    distance to the stored plan; mean|Q| rescales the trade-off as value
    magnitudes grow.  Online callers switch bc_enabled off and it becomes a
    plain critic_only core.  While cloning is active the mean_score log
    column carries the negated weighted imitation error instead of a plan
    score, so the offline log still shows what the actor is minimizing.
    """

    def __init__(self, rng, config: TrainerConfig | None = None, bc_alpha: float = 2.5, **kwargs):
        config = config or TrainerConfig(actor_mode="critic_only")
        if config.actor_mode != "critic_only":
            raise ValueError("cloning regularizes a plain TD3 actor; use critic_only mode")
        super().__init__(rng, config=config, **kwargs)
        self.bc_alpha = bc_alpha
        self.bc_enabled = True

    def actor_gradient(self, batch: np.ndarray):
        if not self.bc_enabled:
            return super().actor_gradient(batch)

        s = batch["features"]
        n = len(batch)
        norm, cache = self.actor.forward(s)
        x = self._critic_input(s, norm)
        out, c_cache = self.critic_1.forward(x)
        _, _, x_grad = self.critic_1.backward(c_cache, np.ones((n, 1)))

        lam = self.bc_alpha / max(float(np.mean(np.abs(out[:, 0]))), 1e-8)
        data_norm = plans_to_normalized(batch["plan"]).reshape(n, -1)
        mse = float(np.mean((norm - data_norm) ** 2))
        ascent = x_grad[:, self.feature_dim :] - lam * 2.0 * (norm - data_norm) / norm.shape[1]

        w_grads, b_grads, _ = self.actor.backward(cache, -ascent / n)
        info = {
            "mean_score": -lam * mse,
            "mean_critic": float(np.mean(out[:, 0])),
            "weight": self.critic_weight(),
        }
        return w_grads, b_grads, info


@dataclass
class Method:
    """A runnable policy plus (optionally) its trainer.

    act() always uses the last synced snapshot, never the live nets, so the
    behavior policy only changes when the runner says so.
    """

    name: str
    core: TD3Core | None
    explores: bool = True
    uses_offline_replay: bool = True
    offline_update_steps: int = 0
    _policy: object = field(default=None, repr=False)

    def __post_init__(self):
        self.sync()

    @property
    def trains(self) -> bool:
        return self.core is not None

    def sync(self) -> None:
        if self.core is not None:
            self._policy = self.core.snapshot_policy()

    def act(self, obs: dict, explore: bool = False, rng=None) -> np.ndarray:
        if self.core is None:
            return expert_plan(obs["scene"])
        plan = self._policy(obs["features"])
        if explore and self.explores:
            if rng is None:
                raise ValueError("exploration requires an rng")
            plan = apply_exploration(plan, rng, self.core.config.explore_sigma)
        return plan

    def train(self, batch: np.ndarray) -> dict | None:
        if self.core is None:
            return None
        return self.core.train_step(batch)

    def finish_offline_phase(self) -> None:
        if isinstance(self.core, BcTd3Core):
            self.core.bc_enabled = False


def build_method(
    name: str,
    dataset: np.ndarray,
    seed: np.random.SeedSequence,
    config: TrainerConfig | None = None,
    pretrain_epochs: int = 40,
    offline_update_steps: int = 2000,
) -> Method:
    """Construct a ready-to-run method.

    The seed is split the same way for every entry, so two methods built from
    the same sequence share their pretrained actor bit for bit and differ
    only in how they train it.
    """
    config = config or TrainerConfig()
    pretrain_seed, core_seed = seed.spawn(2)

    if name == "ours":
        actor = pretrain_actor(dataset, pretrain_epochs, pretrain_seed, weights=config.objective_weights)
        core = TD3Core(np.random.default_rng(core_seed), config=replace(config, actor_mode="hybrid"), actor=actor)
        return Method(name, core)

    if name == "sacson_ft":
        actor = pretrain_actor(dataset, pretrain_epochs, pretrain_seed, weights=config.objective_weights)
        core = TD3Core(
            np.random.default_rng(core_seed), config=replace(config, actor_mode="score_only"), actor=actor
        )
        return Method(name, core, explores=False)

    if name in ("residual", "residual_dagger"):
        weights = config.objective_weights
        if name == "residual":
            weights = pose_only_weights(weights)
        base = pretrain_actor(dataset, pretrain_epochs, pretrain_seed, weights=weights)
        core = ResidualTD3Core(
            np.random.default_rng(core_seed), base=base, config=replace(config, actor_mode="critic_only")
        )
        return Method(name, core, uses_offline_replay=False)

    if name == "td3bc_td3":
        core = BcTd3Core(np.random.default_rng(core_seed), config=replace(config, actor_mode="critic_only"))
        return Method(name, core, offline_update_steps=offline_update_steps)

    if name == "fastrlap":
        core = TD3Core(np.random.default_rng(core_seed), config=replace(config, actor_mode="critic_only"))
        return Method(name, core, uses_offline_replay=False)

    if name == "planner":
        return Method(name, core=None, explores=False, uses_offline_replay=False)

    raise ValueError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}")
