"""Actor-critic networks and a from-scratch PPO training loop.

The policy maps the normalized 11-element observation to a diagonal-Gaussian
thrust command; a separate critic estimates state value.  Training collects
fixed-length rollouts, computes generalized advantage estimates, and applies
clipped-surrogate updates.  Everything is seeded: single-worker runs are
bitwise reproducible, including across checkpoint/resume.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .environment import (
    DvWeightScheduler,
    EpisodeConfig,
    InspectionEnv,
    Observation,
    W_EVAL,
)
from .dynamics import CwParams

CHECKPOINT_VERSION = "1"


class PolicyError(ValueError):
    """Raised for invalid policy inputs or corrupted checkpoints."""


def _layer_init(layer: nn.Linear, std: float = math.sqrt(2.0)) -> nn.Linear:
    nn.init.orthogonal_(layer.weight, std)
    nn.init.constant_(layer.bias, 0.0)
    return layer


class ActorCritic(nn.Module):
    """Separate actor and critic MLPs: 11 -> 256 -> 256 -> (3 means | 1 value).

    Hidden activations are tanh; the action distribution is a diagonal
    Gaussian with a state-independent learned log standard deviation.
    """

    def __init__(self, obs_dim: int = 11, act_dim: int = 3, hidden: int = 256,
                 init_log_std: float = -0.5):
        super().__init__()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.actor = nn.Sequential(
            _layer_init(nn.Linear(obs_dim, hidden)), nn.Tanh(),
            _layer_init(nn.Linear(hidden, hidden)), nn.Tanh(),
            _layer_init(nn.Linear(hidden, act_dim), std=0.01),
        )
        self.critic = nn.Sequential(
            _layer_init(nn.Linear(obs_dim, hidden)), nn.Tanh(),
            _layer_init(nn.Linear(hidden, hidden)), nn.Tanh(),
            _layer_init(nn.Linear(hidden, 1), std=1.0),
        )
        self.log_std = nn.Parameter(torch.full((act_dim,), float(init_log_std)))

    def action_mean(self, obs: torch.Tensor) -> torch.Tensor:
        return self.actor(obs)

    def value(self, obs: torch.Tensor) -> torch.Tensor:
        return self.critic(obs).squeeze(-1)

    def evaluate_actions(self, obs: torch.Tensor, actions: torch.Tensor
                         ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Log-prob of given actions, distribution entropy, and values."""
        mean = self.actor(obs)
        std = torch.exp(self.log_std)
        dist = torch.distributions.Normal(mean, std)
        log_prob = dist.log_prob(actions).sum(-1)
        entropy = dist.entropy().sum(-1)
        return log_prob, entropy, self.value(obs)


def act(model: ActorCritic, obs_vector: np.ndarray, stochastic: bool = True,
        generator: torch.Generator | None = None) -> tuple[np.ndarray, float, float]:
    """One policy query: action in [-1, 1]^3, its log-prob, and the value.

    Stochastic mode samples from the Gaussian and clamps into the action
    bounds; deterministic mode returns the (clamped) mean.  The log-prob is
    evaluated at the clamped action, consistently with how updates score it.
    """
    obs_vector = np.asarray(obs_vector, dtype=np.float64)
    if obs_vector.shape != (model.obs_dim,):
        raise PolicyError(f"observation must have shape ({model.obs_dim},), got {obs_vector.shape}")
    if not np.all(np.isfinite(obs_vector)):
        raise PolicyError("observation contains non-finite values")
    obs = torch.as_tensor(obs_vector, dtype=torch.float32)
    with torch.no_grad():
        mean = model.action_mean(obs)
        std = torch.exp(model.log_std)
        if stochastic:
            eps = torch.randn(model.act_dim, generator=generator)
            action = mean + std * eps
        else:
            action = mean
        action = torch.clamp(action, -1.0, 1.0)
        dist = torch.distributions.Normal(mean, std)
        log_prob = dist.log_prob(action).sum()
        value = model.value(obs.unsqueeze(0)).squeeze(0)
    return action.numpy().copy(), float(log_prob), float(value)


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float, last_value: float = 0.0
                ) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one time-ordered sequence.

    ``dones[t]`` marks that the transition at t ended its episode, so no
    bootstrap value flows across that boundary.  ``last_value`` bootstraps
    the tail when the final transition left the episode unfinished.
    Returns (advantages, returns) with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise PolicyError("rewards, values, dones must be aligned 1-D sequences")
    n = len(rewards)
    advantages = np.zeros(n, dtype=np.float64)
    gae = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        next_nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * next_nonterminal - values[t]
        gae = delta + gamma * lam * next_nonterminal * gae
        advantages[t] = gae
    return advantages, advantages + values


def ppo_surrogate_loss(new_log_probs: torch.Tensor, old_log_probs: torch.Tensor,
                       advantages: torch.Tensor, clip_ratio: float
                       ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Clipped-surrogate policy loss plus clip-fraction and KL diagnostics."""
    ratio = torch.exp(new_log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    loss = -torch.min(unclipped, clipped).mean()
    with torch.no_grad():
        clip_fraction = ((ratio - 1.0).abs() > clip_ratio).float().mean()
        approx_kl = ((ratio - 1.0) - (new_log_probs - old_log_probs)).mean()
    return loss, clip_fraction, approx_kl


def value_loss(predicted: torch.Tensor, returns: torch.Tensor) -> torch.Tensor:
    """Mean-squared-error regression of the critic onto empirical returns."""
    return 0.5 * ((predicted - returns) ** 2).mean()


@dataclass(frozen=True)
class TrainConfig:
    """PPO hyperparameters and run shape."""

    gamma: float = 0.99
    total_timesteps: int = 200_000
    rollout_length: int = 3000
    minibatch_size: int = 256
    epochs: int = 4
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    seed: int = 0
    num_envs: int = 1
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    init_log_std: float = -0.5
    normalize_advantages: bool = True
    eval_interval: int = 50_000
    eval_episodes: int = 10
    checkpoint_interval: int = 0  # 0: only at the end

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise PolicyError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.clip_ratio <= 0.0:
            raise PolicyError(f"clip_ratio must be > 0, got {self.clip_ratio}")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise PolicyError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.total_timesteps < 0:
            raise PolicyError(f"total_timesteps must be >= 0, got {self.total_timesteps}")
        if self.rollout_length < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise PolicyError("rollout_length, minibatch_size, epochs must be >= 1")
        if self.num_envs < 1:
            raise PolicyError(f"num_envs must be >= 1, got {self.num_envs}")
        if self.learning_rate < 0.0:
            raise PolicyError(f"learning_rate must be >= 0, got {self.learning_rate}")


@dataclass
class RolloutBatch:
    """Aligned rollout sequences ready for the PPO update."""

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.observations)
        for name in ("actions", "log_probs", "rewards", "values", "dones",
                     "advantages", "returns"):
            if len(getattr(self, name)) != n:
                raise PolicyError(f"rollout field {name} misaligned: {len(getattr(self, name))} != {n}")
        if not np.all(np.isfinite(self.advantages)):
            raise PolicyError("advantages contain non-finite values")

    def __len__(self) -> int:
        return len(self.observations)


def ppo_update(model: ActorCritic, optimizer: torch.optim.Optimizer,
               batch: RolloutBatch, cfg: TrainConfig,
               generator: torch.Generator | None = None) -> dict:
    """Run the configured epochs of minibatch clipped-surrogate updates.

    Returns diagnostics averaged over minibatches: policy loss, value loss,
    entropy, clip fraction, and a KL estimate.  A non-finite loss aborts
    before the optimizer step, raising with the offending diagnostics.
    """
    obs = torch.as_tensor(batch.observations, dtype=torch.float32)
    actions = torch.as_tensor(batch.actions, dtype=torch.float32)
    old_log_probs = torch.as_tensor(batch.log_probs, dtype=torch.float32)
    advantages = torch.as_tensor(batch.advantages, dtype=torch.float32)
    returns = torch.as_tensor(batch.returns, dtype=torch.float32)

    n = len(batch)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "clip_fraction": 0.0, "approx_kl": 0.0}
    n_minibatches = 0
    for _epoch in range(cfg.epochs):
        perm = torch.randperm(n, generator=generator)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            mb_adv = advantages[idx]
            if cfg.normalize_advantages and len(idx) >= 2:
                std = mb_adv.std()
                if std > 1e-8:
                    mb_adv = (mb_adv - mb_adv.mean()) / std
            new_log_probs, entropy, values = model.evaluate_actions(obs[idx], actions[idx])
            pg_loss, clip_frac, approx_kl = ppo_surrogate_loss(
                new_log_probs, old_log_probs[idx], mb_adv, cfg.clip_ratio)
            v_loss = value_loss(values, returns[idx])
            ent = entropy.mean()
            loss = pg_loss + cfg.value_coef * v_loss - cfg.entropy_coef * ent
            if not torch.isfinite(loss):
                raise PolicyError(
                    f"non-finite loss: policy={float(pg_loss)}, value={float(v_loss)}, "
                    f"entropy={float(ent)}")
            optimizer.zero_grad()
            loss.backward()
            if cfg.max_grad_norm > 0:
                nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            stats["policy_loss"] += float(pg_loss.detach())
            stats["value_loss"] += float(v_loss.detach())
            stats["entropy"] += float(ent.detach())
            stats["clip_fraction"] += float(clip_frac)
            stats["approx_kl"] += float(approx_kl)
            n_minibatches += 1
    return {k: v / n_minibatches for k, v in stats.items()}


class PolicyController:
    """Adapter running an ActorCritic as an episode controller."""

    name = "policy"

    def __init__(self, model: ActorCritic, stochastic: bool = False,
                 generator: torch.Generator | None = None):
        self.model = model
        self.stochastic = stochastic
        self.generator = generator

    def reset(self, env: InspectionEnv) -> None:
        pass

    def act(self, obs: Observation, env: InspectionEnv) -> np.ndarray:
        action, _, _ = act(self.model, obs.vector, stochastic=self.stochastic,
                           generator=self.generator)
        return action * env.cw.u_max


class PpoTrainer:
    """Rollout/update loop over one or more sequentially stepped environments.

    ``num_envs = 1`` is the strict reproducibility mode; larger counts
    interleave deterministically in a fixed order.  The fuel-penalty
    curriculum advances with every collected step and is broadcast to the
    environments between rollout batches.
    """

    def __init__(self, cfg: TrainConfig, episode_cfg: EpisodeConfig | None = None,
                 cw: CwParams | None = None,
                 env_factory: Callable[[int], InspectionEnv] | None = None):
        self.cfg = cfg
        self.cw = cw or CwParams()
        self.episode_cfg = episode_cfg or EpisodeConfig()
        torch.manual_seed(cfg.seed)
        self.model = ActorCritic(init_log_std=cfg.init_log_std)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.learning_rate)
        self.generator = torch.Generator()
        self.generator.manual_seed(cfg.seed)
        if env_factory is None:
            env_factory = self._default_env_factory
        self.envs = [env_factory(i) for i in range(cfg.num_envs)]
        self.scheduler = DvWeightScheduler()
        self.global_step = 0
        self.curves: list[dict] = []
        self._obs = [None] * cfg.num_envs
        self._next_eval = cfg.eval_interval

    def _default_env_factory(self, index: int) -> InspectionEnv:
        env_seed = int(np.random.SeedSequence(
            entropy=self.cfg.seed, spawn_key=(index,)).generate_state(1)[0])
        cfg_fields = asdict(self.episode_cfg)
        cfg_fields["seed"] = env_seed
        cfg_fields["spawn_radius"] = tuple(cfg_fields["spawn_radius"])
        cfg_fields["spawn_speed"] = tuple(cfg_fields["spawn_speed"])
        return InspectionEnv(cw=self.cw, cfg=EpisodeConfig(**cfg_fields))

    # -- rollout collection ---------------------------------------------------

    def _collect(self, steps_per_env: int) -> RolloutBatch:
        cfg = self.cfg
        n_env = cfg.num_envs
        total = steps_per_env * n_env
        obs_buf = np.zeros((n_env, steps_per_env, self.model.obs_dim), dtype=np.float32)
        act_buf = np.zeros((n_env, steps_per_env, self.model.act_dim), dtype=np.float32)
        logp_buf = np.zeros((n_env, steps_per_env), dtype=np.float32)
        rew_buf = np.zeros((n_env, steps_per_env), dtype=np.float32)
        val_buf = np.zeros((n_env, steps_per_env), dtype=np.float32)
        done_buf = np.zeros((n_env, steps_per_env), dtype=np.float32)

        for i, env in enumerate(self.envs):
            env.dv_weight = self.scheduler.w
            if self._obs[i] is None:
                self._obs[i] = env.reset()

        for t in range(steps_per_env):
            for i, env in enumerate(self.envs):
                obs_vec = self._obs[i].vector
                action, log_prob, value = act(self.model, obs_vec, stochastic=True,
                                              generator=self.generator)
                result = env.step(action * self.cw.u_max)
                obs_buf[i, t] = obs_vec
                act_buf[i, t] = action
                logp_buf[i, t] = log_prob
                rew_buf[i, t] = result.reward.total
                val_buf[i, t] = value
                done_buf[i, t] = float(result.done)
                self.scheduler.record_step()
                self.global_step += 1
                if result.done:
                    self.scheduler.record_episode(env.inspected_pct)
                    self._obs[i] = env.reset()
                else:
                    self._obs[i] = result.observation

        adv_buf = np.zeros((n_env, steps_per_env), dtype=np.float64)
        ret_buf = np.zeros((n_env, steps_per_env), dtype=np.float64)
        for i in range(n_env):
            if done_buf[i, -1] > 0.5:
                last_value = 0.0
            else:
                with torch.no_grad():
                    last_value = float(self.model.value(torch.as_tensor(
                        self._obs[i].vector, dtype=torch.float32).unsqueeze(0)).squeeze(0))
            adv_buf[i], ret_buf[i] = compute_gae(
                rew_buf[i], val_buf[i], done_buf[i], cfg.gamma, cfg.gae_lambda, last_value)

        return RolloutBatch(
            observations=obs_buf.reshape(total, -1),
            actions=act_buf.reshape(total, -1),
            log_probs=logp_buf.reshape(total),
            rewards=rew_buf.reshape(total),
            values=val_buf.reshape(total),
            dones=done_buf.reshape(total),
            advantages=adv_buf.reshape(total),
            returns=ret_buf.reshape(total),
        )

    # -- evaluation during training -------------------------------------------

    def _evaluate(self) -> dict:
        """Deterministic-policy evaluation for the training curve."""
        from .evaluation import METRIC_NAMES, episode_seed, iqm, run_episode

        eval_seed = int(np.random.SeedSequence(
            entropy=self.cfg.seed, spawn_key=(0xE7A1, self.global_step)).generate_state(1)[0])
        env = self._default_env_factory(0)
        env.dv_weight = W_EVAL
        controller = PolicyController(self.model, stochastic=False)
        episodes = [run_episode(env, controller, episode_seed(eval_seed, ep))[0]
                    for ep in range(self.cfg.eval_episodes)]
        record = {"timestep": self.global_step}
        for name in METRIC_NAMES:
            record[name] = iqm([getattr(m, name) for m in episodes])
        record["dv_weight"] = self.scheduler.w
        return record

    # -- training loop ---------------------------------------------------------

    def train(self, checkpoint_dir: str | Path | None = None,
              progress: Callable[[dict], None] | None = None) -> list[dict]:
        """Run rollout/update cycles until total_timesteps; returns the curve."""
        cfg = self.cfg
        if cfg.total_timesteps == 0:
            return self.curves
        steps_per_env = max(1, cfg.rollout_length // cfg.num_envs)
        next_checkpoint = cfg.checkpoint_interval or None
        while self.global_step < cfg.total_timesteps:
            batch = self._collect(steps_per_env)
            stats = ppo_update(self.model, self.optimizer, batch, cfg, self.generator)
            if self.global_step >= self._next_eval:
                record = self._evaluate()
                record.update(stats)
                self.curves.append(record)
                self._next_eval += cfg.eval_interval
                if progress is not None:
                    progress(record)
            if checkpoint_dir is not None and next_checkpoint is not None \
                    and self.global_step >= next_checkpoint:
                self.save_checkpoint(Path(checkpoint_dir) /
                                     f"checkpoint_{self.global_step:010d}.npz")
                next_checkpoint += cfg.checkpoint_interval
        if not self.curves or self.curves[-1]["timestep"] != self.global_step:
            record = self._evaluate()
            self.curves.append(record)
            if progress is not None:
                progress(record)
        if checkpoint_dir is not None:
            self.save_checkpoint(Path(checkpoint_dir) / "checkpoint_final.npz")
        return self.curves

    # -- checkpointing ----------------------------------------------------------

    def save_checkpoint(self, path: str | Path) -> None:
        """Single-file portable checkpoint: weights, optimizer, RNG, curriculum."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays: dict[str, np.ndarray] = {}
        for name, tensor in self.model.state_dict().items():
            arrays[f"weights::{name}"] = tensor.detach().numpy()
        opt_state = self.optimizer.state_dict()
        for idx, state in opt_state["state"].items():
            for key, value in state.items():
                arrays[f"adam::{idx}::{key}"] = (
                    value.detach().numpy() if torch.is_tensor(value)
                    else np.asarray(value))
        arrays["torch_rng"] = self.generator.get_state().numpy()
        meta = {
            "version": CHECKPOINT_VERSION,
            "train_config": asdict(self.cfg),
            "episode_config": _episode_cfg_to_dict(self.episode_cfg),
            "cw_params": asdict(self.cw),
            "global_step": self.global_step,
            "next_eval": self._next_eval,
            "scheduler": self.scheduler.state_dict(),
            "curves": self.curves,
            "adam_param_groups": opt_state["param_groups"],
            "env_snapshots": [env.snapshot() for env in self.envs],
            "env_has_obs": [o is not None for o in self._obs],
        }
        arrays["meta"] = np.array(json.dumps(meta))
        np.savez(path, **arrays)

    @classmethod
    def load_checkpoint(cls, path: str | Path) -> "PpoTrainer":
        path = Path(path)
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise PolicyError(
                    f"checkpoint version mismatch: file has {meta.get('version')!r}, "
                    f"this build reads {CHECKPOINT_VERSION!r}")
            arrays = {k: data[k] for k in data.files}

        cfg = TrainConfig(**meta["train_config"])
        episode_cfg = _episode_cfg_from_dict(meta["episode_config"])
        cw = CwParams(**meta["cw_params"])
        trainer = cls(cfg, episode_cfg=episode_cfg, cw=cw)

        weights = {k.split("::", 1)[1]: torch.as_tensor(v)
                   for k, v in arrays.items() if k.startswith("weights::")}
        trainer.model.load_state_dict(weights)

        opt_state: dict = {"state": {}, "param_groups": meta["adam_param_groups"]}
        for key, value in arrays.items():
            if not key.startswith("adam::"):
                continue
            _, idx, name = key.split("::")
            entry = opt_state["state"].setdefault(int(idx), {})
            entry[name] = torch.as_tensor(value)
        trainer.optimizer.load_state_dict(opt_state)

        trainer.generator.set_state(torch.as_tensor(arrays["torch_rng"]))
        trainer.global_step = meta["global_step"]
        trainer._next_eval = meta["next_eval"]
        trainer.scheduler = DvWeightScheduler.from_state_dict(meta["scheduler"])
        trainer.curves = list(meta["curves"])
        for i, (env, snap) in enumerate(zip(trainer.envs, meta["env_snapshots"])):
            env.restore(snap)
            has_obs = meta["env_has_obs"][i]
            trainer._obs[i] = env.build_observation() if has_obs and snap["deputy"] else None
        return trainer


def load_policy(path: str | Path) -> tuple[ActorCritic, dict]:
    """Load just the network weights (plus metadata) from a checkpoint."""
    path = Path(path)
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise PolicyError(
                f"checkpoint version mismatch: file has {meta.get('version')!r}, "
                f"this build reads {CHECKPOINT_VERSION!r}")
        weights = {k.split("::", 1)[1]: torch.as_tensor(data[k])
                   for k in data.files if k.startswith("weights::")}
    model = ActorCritic()
    model.load_state_dict(weights)
    return model, meta


def _episode_cfg_to_dict(cfg: EpisodeConfig) -> dict:
    d = asdict(cfg)
    d["thresholds"] = {"too_dark": cfg.thresholds.too_dark,
                       "too_bright": cfg.thresholds.too_bright}
    return d


def _episode_cfg_from_dict(d: dict) -> EpisodeConfig:
    from .illumination import BrightnessThresholds

    d = dict(d)
    d["spawn_radius"] = tuple(d["spawn_radius"])
    d["spawn_speed"] = tuple(d["spawn_speed"])
    d["thresholds"] = BrightnessThresholds(**d["thresholds"])
    return EpisodeConfig(**d)


def train(cfg: TrainConfig, episode_cfg: EpisodeConfig | None = None,
          cw: CwParams | None = None, checkpoint_dir: str | Path | None = None,
          progress: Callable[[dict], None] | None = None
          ) -> tuple[ActorCritic, list[dict]]:
    """Train one policy; returns the model and its evaluation curve."""
    trainer = PpoTrainer(cfg, episode_cfg=episode_cfg, cw=cw)
    curves = trainer.train(checkpoint_dir=checkpoint_dir, progress=progress)
    return trainer.model, curves
