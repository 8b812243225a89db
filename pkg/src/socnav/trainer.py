"""TD3 trainer blending the differentiable trajectory score with a learned critic.

The actor outputs a full normalized plan (tanh range, one pair per horizon
step).  Twin critics score (features, normalized plan).  The actor climbs

    score(s, plan) + w * critic(s, plan)

where `score` is the analytic trajectory objective and w ramps linearly from
0 to 1 so a freshly initialized critic cannot wreck a pretrained policy.  The
TD target assumes the scores of consecutive plans cancel, leaving the critic
a plain Bellman recursion in the scalar reward; a config switch keeps the
score inside the regression target instead, for ablation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_DIM
from .geometry import ACTION_HIGH, ACTION_LOW
from .nets import Adam, Mlp, actor_net, critic_net, polyak_update
from .objective import HORIZON, ObjectiveWeights, grad_tau_batch, score_batch
from .replay import scene_from_batch

ACTION_MID = (ACTION_HIGH + ACTION_LOW) / 2.0
ACTION_HALF = (ACTION_HIGH - ACTION_LOW) / 2.0

TRAIN_LOG_COLUMNS = [
    "step",
    "critic_loss_1",
    "critic_loss_2",
    "actor_loss",
    "critic_weight",
    "mean_critic",
    "mean_score",
]


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; message carries the step context."""


def plans_to_normalized(plans: np.ndarray) -> np.ndarray:
    return np.clip((plans - ACTION_MID) / ACTION_HALF, -1.0, 1.0)


def plans_from_normalized(norm: np.ndarray) -> np.ndarray:
    return ACTION_MID + ACTION_HALF * norm


def plan_with(actor: Mlp, features: np.ndarray) -> np.ndarray:
    """Physical plan (H, 2) for a single feature vector."""
    norm = actor(np.asarray(features, dtype=float).reshape(1, -1))
    return plans_from_normalized(norm.reshape(HORIZON, 2))


def apply_exploration(
    plan: np.ndarray, rng: np.random.Generator, sigma_fraction: float = 0.1
) -> np.ndarray:
    """Gaussian noise on the first action only, clipped back into range."""
    plan = plan.copy()
    plan[0] += rng.normal(0.0, sigma_fraction * (ACTION_HIGH - ACTION_LOW))
    plan[0] = np.clip(plan[0], ACTION_LOW, ACTION_HIGH)
    return plan


def act_with(
    actor: Mlp,
    features: np.ndarray,
    explore: bool = False,
    rng: np.random.Generator | None = None,
    sigma_fraction: float = 0.1,
) -> np.ndarray:
    """Plan to execute: exploration noise perturbs only the first action."""
    plan = plan_with(actor, features)
    if explore:
        if rng is None:
            raise ValueError("exploration requires an rng")
        plan = apply_exploration(plan, rng, sigma_fraction)
    return plan


@dataclass
class TrainerConfig:
    gamma: float = 0.97
    lr: float = 1e-4
    batch_size: int = 76
    rho: float = 0.005
    policy_delay: int = 2
    smoothing_sigma: float = 0.2  # target-plan noise, normalized units
    smoothing_clip: float = 0.5
    explore_sigma: float = 0.1  # fraction of the action range, first action only
    critic_ramp_steps: int = 2000  # linear 0 -> max weight on the critic term
    critic_weight_max: float = 1.0
    score_in_target: bool = False  # regress the critic toward target minus plan score
    # hybrid: score + ramped critic; score_only: no critic anywhere;
    # critic_only: plain TD3 (fresh-net baselines).
    actor_mode: str = "hybrid"
    objective_weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)


class TD3Core:
    """Twin critics, delayed actor, Polyak targets; see module docstring."""

    def __init__(
        self,
        rng: np.random.Generator,
        config: TrainerConfig | None = None,
        actor: Mlp | None = None,
        feature_dim: int = FEATURE_DIM,
        plan_len: int = HORIZON,
    ):
        self.config = config or TrainerConfig()
        if self.config.actor_mode not in ("hybrid", "score_only", "critic_only"):
            raise ValueError(f"unknown actor_mode {self.config.actor_mode!r}")
        self._rng = rng
        self.feature_dim = feature_dim
        self.plan_len = plan_len
        plan_dim = plan_len * 2

        self.actor = actor.copy() if actor is not None else actor_net(feature_dim, plan_dim, rng=rng)
        self.critic_1 = critic_net(feature_dim + plan_dim, rng=rng)
        self.critic_2 = critic_net(feature_dim + plan_dim, rng=rng)
        self.target_actor = self.actor.copy()
        self.target_critic_1 = self.critic_1.copy()
        self.target_critic_2 = self.critic_2.copy()

        lr = self.config.lr
        self.actor_opt = Adam(self.actor, lr=lr)
        self.critic_opt_1 = Adam(self.critic_1, lr=lr)
        self.critic_opt_2 = Adam(self.critic_2, lr=lr)

        self.step_count = 0
        self.critic_updates = 0
        self.actor_updates = 0
        self._last_actor_loss = 0.0
        self._last_mean_score = 0.0

    # -- plan composition ------------------------------------------------------
    # Subclasses that wrap the learned net around a fixed base policy override
    # these two; the default actor IS the policy.

    def compose_normalized(self, features: np.ndarray, raw_norm: np.ndarray):
        """Map raw net output to the executed normalized plan.

        Returns (norm, pass_mask); pass_mask zeroes the gradient where a
        composition clip saturates."""
        return raw_norm, np.ones_like(raw_norm)

    def snapshot_policy(self):
        """Frozen callable features (F,) -> physical plan (H, 2)."""
        actor = self.actor.copy()
        plan_len = self.plan_len

        def policy(features: np.ndarray) -> np.ndarray:
            raw = actor(np.asarray(features, dtype=float).reshape(1, -1))
            norm, _ = self.compose_normalized(features.reshape(1, -1), raw)
            return plans_from_normalized(norm.reshape(plan_len, 2))

        return policy

    # -- value plumbing ------------------------------------------------------

    def critic_weight(self) -> float:
        cfg = self.config
        if cfg.actor_mode == "score_only":
            return 0.0
        if cfg.actor_mode == "critic_only":
            return 1.0
        if cfg.critic_ramp_steps <= 0:
            return cfg.critic_weight_max
        frac = min(1.0, self.step_count / cfg.critic_ramp_steps)
        return cfg.critic_weight_max * frac

    def _critic_input(self, features: np.ndarray, norm_plans: np.ndarray) -> np.ndarray:
        return np.concatenate([features, norm_plans.reshape(len(features), -1)], axis=1)

    def plan(self, features: np.ndarray) -> np.ndarray:
        """Physical plans (B, H, 2) from the live actor."""
        features = np.asarray(features, dtype=float)
        norm, _ = self.compose_normalized(features, self.actor(features))
        return plans_from_normalized(norm.reshape(-1, self.plan_len, 2))

    def act(self, features: np.ndarray, explore: bool = False, rng=None) -> np.ndarray:
        plan = self.plan(np.asarray(features, dtype=float).reshape(1, -1))[0]
        if explore:
            rng = rng if rng is not None else self._rng
            plan = apply_exploration(plan, rng, self.config.explore_sigma)
        return plan

    def sync_policy(self) -> Mlp:
        return self.actor.copy()

    def batch_scores(self, batch: np.ndarray, plans: np.ndarray) -> np.ndarray:
        """Trajectory scores of physical plans against the batch scenes."""
        scene = scene_from_batch(batch)
        start = np.zeros((len(batch), 3))
        return score_batch(
            start,
            plans,
            scene["goal"],
            scene["cloud"],
            scene["ped_pos"],
            scene["ped_vel"],
            scene["ped_mask"],
            scene["prev_action"],
            self.config.objective_weights,
            self.config.gamma,
        )

    def _score_gradients(self, batch: np.ndarray, plans: np.ndarray):
        scene = scene_from_batch(batch)
        start = np.zeros((len(batch), 3))
        return grad_tau_batch(
            start,
            plans,
            scene["goal"],
            scene["cloud"],
            scene["ped_pos"],
            scene["ped_vel"],
            scene["ped_mask"],
            scene["prev_action"],
            self.config.objective_weights,
            self.config.gamma,
        )

    def hybrid_values(self, batch: np.ndarray, plans: np.ndarray) -> dict:
        """score + w * critic for given physical plans; the blended total the
        actor climbs, exposed for audits."""
        scores = self.batch_scores(batch, plans)
        x = self._critic_input(batch["features"], plans_to_normalized(plans))
        critic = self.critic_1(x)[:, 0]
        w = self.critic_weight()
        return {
            "score": scores,
            "critic": critic,
            "critic_weight": w,
            "total": scores + w * critic,
        }

    # -- updates ---------------------------------------------------------------

    def td_target(self, batch: np.ndarray) -> np.ndarray:
        cfg = self.config
        s_next = batch["features_next"]
        next_norm, _ = self.compose_normalized(s_next, self.target_actor(s_next))
        noise = np.clip(
            cfg.smoothing_sigma * self._rng.standard_normal(next_norm.shape),
            -cfg.smoothing_clip,
            cfg.smoothing_clip,
        )
        noisy = np.clip(next_norm + noise, -1.0, 1.0)
        x = np.concatenate([s_next, noisy], axis=1)
        q_min = np.minimum(self.target_critic_1(x)[:, 0], self.target_critic_2(x)[:, 0])
        keep = 1.0 - batch["done"].astype(float)
        return batch["reward"] + cfg.gamma * keep * q_min

    def critic_update(self, batch: np.ndarray) -> dict:
        y = self.td_target(batch)
        if self.config.score_in_target:
            y = y - self.batch_scores(batch, batch["plan"])

        x = self._critic_input(batch["features"], plans_to_normalized(batch["plan"]))
        n = len(batch)
        losses = []
        mean_critic = 0.0
        for net, opt in ((self.critic_1, self.critic_opt_1), (self.critic_2, self.critic_opt_2)):
            out, cache = net.forward(x)
            delta = out[:, 0] - y
            losses.append(float(np.mean(delta**2)))
            w_grads, b_grads, _ = net.backward(cache, (2.0 * delta / n)[:, None])
            opt.step(w_grads, b_grads)
            if net is self.critic_1:
                mean_critic = float(np.mean(out[:, 0]))
        self.critic_updates += 1

        if not all(np.isfinite(v) for v in losses):
            raise TrainingDiverged(
                f"critic loss non-finite at step {self.step_count}: {losses}, "
                f"target range [{np.min(y)}, {np.max(y)}]"
            )
        return {"critic_loss_1": losses[0], "critic_loss_2": losses[1], "mean_critic": mean_critic}

    def actor_gradient(self, batch: np.ndarray):
        """Descent gradients on the negated blended objective, pre-optimizer.

        Returns (weight_grads, bias_grads, info) where info carries the batch
        means that feed the training log.
        """
        cfg = self.config
        s = batch["features"]
        n = len(batch)
        raw, cache = self.actor.forward(s)
        norm, pass_mask = self.compose_normalized(s, raw)
        plans = plans_from_normalized(norm.reshape(n, self.plan_len, 2))

        ascent = np.zeros_like(norm)
        mean_score = 0.0
        mean_critic = 0.0
        w = self.critic_weight()

        if cfg.actor_mode in ("hybrid", "score_only"):
            scores, d_phys = self._score_gradients(batch, plans)
            ascent += (d_phys * ACTION_HALF).reshape(n, -1)
            mean_score = float(np.mean(scores))
        if cfg.actor_mode in ("hybrid", "critic_only") and w != 0.0:
            x = self._critic_input(s, norm)
            out, c_cache = self.critic_1.forward(x)
            _, _, x_grad = self.critic_1.backward(c_cache, np.ones((n, 1)))
            ascent += w * x_grad[:, self.feature_dim :]
            mean_critic = float(np.mean(out[:, 0]))

        w_grads, b_grads, _ = self.actor.backward(cache, -(ascent * pass_mask) / n)
        return w_grads, b_grads, {"mean_score": mean_score, "mean_critic": mean_critic, "weight": w}

    def actor_update(self, batch: np.ndarray) -> dict:
        w_grads, b_grads, info = self.actor_gradient(batch)
        self.actor_opt.step(w_grads, b_grads)
        self.actor_updates += 1

        mean_score, mean_critic, w = info["mean_score"], info["mean_critic"], info["weight"]
        loss = -(mean_score + w * mean_critic)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"actor loss non-finite at step {self.step_count}: "
                f"mean_score={mean_score}, mean_critic={mean_critic}, weight={w}"
            )
        self._last_actor_loss = loss
        self._last_mean_score = mean_score
        return {"actor_loss": loss, "mean_score": mean_score}

    def _sync_targets(self) -> None:
        rho = self.config.rho
        polyak_update(self.target_actor, self.actor, rho)
        polyak_update(self.target_critic_1, self.critic_1, rho)
        polyak_update(self.target_critic_2, self.critic_2, rho)

    def train_step(self, batch: np.ndarray) -> dict:
        """One trainer step: critic regression, delayed actor climb, target mix.

        score_only mode has nothing for a critic to learn, so it climbs the
        actor every step instead.
        """
        self.step_count += 1
        row = {
            "step": self.step_count,
            "critic_loss_1": 0.0,
            "critic_loss_2": 0.0,
            "critic_weight": self.critic_weight(),
            "mean_critic": 0.0,
        }
        if self.config.actor_mode == "score_only":
            row.update(self.actor_update(batch))
        else:
            row.update(self.critic_update(batch))
            if self.critic_updates % self.config.policy_delay == 0:
                row.update(self.actor_update(batch))
                self._sync_targets()
            else:
                row["actor_loss"] = self._last_actor_loss
                row["mean_score"] = self._last_mean_score
        return {k: row[k] for k in TRAIN_LOG_COLUMNS}

    def networks(self) -> dict:
        return {
            "actor": self.actor,
            "critic_1": self.critic_1,
            "critic_2": self.critic_2,
            "target_actor": self.target_actor,
            "target_critic_1": self.target_critic_1,
            "target_critic_2": self.target_critic_2,
        }


def pretrain_actor(
    dataset: np.ndarray,
    epochs: int,
    seed: int,
    lr: float = 1e-4,
    batch_size: int = 76,
    weights: ObjectiveWeights | None = None,
    gamma: float = 0.97,
) -> Mlp:
    """Amortize plan optimization: train the actor to output high-scoring
    plans for the dataset's scenes by direct gradient ascent on the score of
    its own output.  Deterministic in seed; epochs=0 returns the bare
    initialization.
    """
    if len(dataset) == 0:
        raise ValueError("pretraining needs a non-empty dataset")
    weights = weights or ObjectiveWeights()
    rng = np.random.default_rng(seed)
    actor = actor_net(FEATURE_DIM, HORIZON * 2, rng=rng)
    opt = Adam(actor, lr=lr)

    start = np.zeros((len(dataset), 3))
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        for lo in range(0, len(order), batch_size):
            rows = dataset[order[lo : lo + batch_size]]
            n = len(rows)
            norm, cache = actor.forward(rows["features"])
            plans = plans_from_normalized(norm.reshape(n, HORIZON, 2))
            scores, d_phys = grad_tau_batch(
                start[:n],
                plans,
                rows["goal"],
                rows["cloud"],
                rows["ped_pos"],
                rows["ped_vel"],
                rows["ped_mask"],
                rows["prev_action"],
                weights,
                gamma,
            )
            mean_score = float(np.mean(scores))
            if not np.isfinite(mean_score):
                raise TrainingDiverged(f"pretraining diverged at epoch {epoch}: mean score {mean_score}")
            ascent = (d_phys * ACTION_HALF).reshape(n, -1)
            w_grads, b_grads, _ = actor.backward(cache, -ascent / n)
            opt.step(w_grads, b_grads)
    return actor
