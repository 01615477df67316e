"""Declarative run configuration: one YAML document drives every command.

The pydantic models validate field-by-field and convert to the runtime
dataclasses used by the simulation, trainer, and evaluator.  ``config init``
emits the full default set so every knob is visible and documented by name.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .dynamics import CwParams
from .environment import EpisodeConfig
from .illumination import BrightnessThresholds, LightSource, SurfaceMaterial
from .policy import TrainConfig


class ConfigError(ValueError):
    """Raised when a configuration document is invalid."""


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DynamicsSection(_StrictModel):
    mean_motion: float = 0.001027
    mass: float = 12.0
    max_thrust: float = 1.0
    timestep: float = 10.0

    def to_params(self) -> CwParams:
        return CwParams(n=self.mean_motion, m=self.mass,
                        u_max=self.max_thrust, dt=self.timestep)


class EpisodeSection(_StrictModel):
    max_steps: int = 1224
    spawn_radius_min: float = 50.0
    spawn_radius_max: float = 100.0
    spawn_speed_min: float = 0.0
    spawn_speed_max: float = 0.3
    crash_radius: float = 15.0
    escape_radius: float = 800.0
    point_count: int = 100
    chief_radius: float = 10.0
    seed: int = 0

    def to_config(self, mode: str, thresholds: BrightnessThresholds) -> EpisodeConfig:
        return EpisodeConfig(
            max_steps=self.max_steps,
            spawn_radius=(self.spawn_radius_min, self.spawn_radius_max),
            spawn_speed=(self.spawn_speed_min, self.spawn_speed_max),
            crash_radius=self.crash_radius, escape_radius=self.escape_radius,
            mode=mode, point_count=self.point_count,
            chief_radius=self.chief_radius, seed=self.seed,
            thresholds=thresholds)


class IlluminationSection(_StrictModel):
    ambient: tuple[float, float, float] = (0.4, 0.4, 0.4)
    diffuse: tuple[float, float, float] = (0.1, 0.1, 0.1)
    specular: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shininess: float = 100.0
    light_ambient: tuple[float, float, float] = (1.0, 1.0, 1.0)
    light_diffuse: tuple[float, float, float] = (1.0, 1.0, 1.0)
    light_specular: tuple[float, float, float] = (1.0, 1.0, 1.0)
    too_dark: float = 0.2
    too_bright: float = 0.83

    def to_material(self) -> SurfaceMaterial:
        return SurfaceMaterial(k_a=self.ambient, k_d=self.diffuse,
                               k_s=self.specular, alpha=self.shininess)

    def to_light(self) -> LightSource:
        return LightSource(i_a=self.light_ambient, i_d=self.light_diffuse,
                           i_s=self.light_specular)

    def to_thresholds(self) -> BrightnessThresholds:
        return BrightnessThresholds(too_dark=self.too_dark, too_bright=self.too_bright)


class TrainingSection(_StrictModel):
    gamma: float = 0.99
    total_timesteps: int = 10_000_000
    rollout_length: int = 3000
    minibatch_size: int = 256
    epochs: int = 4
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    num_envs: int = 1
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    init_log_std: float = -0.5
    normalize_advantages: bool = True
    eval_interval: int = 100_000
    eval_episodes: int = 10
    checkpoint_interval: int = 1_000_000

    def to_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma, total_timesteps=self.total_timesteps,
            rollout_length=self.rollout_length, minibatch_size=self.minibatch_size,
            epochs=self.epochs, clip_ratio=self.clip_ratio,
            learning_rate=self.learning_rate, gae_lambda=self.gae_lambda,
            entropy_coef=self.entropy_coef, seed=seed, num_envs=self.num_envs,
            value_coef=self.value_coef, max_grad_norm=self.max_grad_norm,
            init_log_std=self.init_log_std,
            normalize_advantages=self.normalize_advantages,
            eval_interval=self.eval_interval, eval_episodes=self.eval_episodes,
            checkpoint_interval=self.checkpoint_interval)


class BaselineSection(_StrictModel):
    station_radius: float = 40.0
    lat_max_deg: float = 50.0
    lead_deg: float = 25.0
    slew_rate: float = 0.004
    approach_rate: float = 0.25
    kp: float = 0.002
    kd: float = 0.09
    barrier_radius: float = 25.0
    barrier_gain: float = 0.01


class EvaluationSection(_StrictModel):
    trials: int = 100
    seeds: list[int] = Field(default_factory=lambda: [0])
    bootstrap_resamples: int = 2000
    bootstrap_seed: int = 0


class RunConfig(_StrictModel):
    """Top-level document: mode plus one section per subsystem."""

    mode: Literal["binary", "spectral"] = "binary"
    output_dir: str = "runs"
    dynamics: DynamicsSection = Field(default_factory=DynamicsSection)
    episode: EpisodeSection = Field(default_factory=EpisodeSection)
    illumination: IlluminationSection = Field(default_factory=IlluminationSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    sun_sync: BaselineSection = Field(default_factory=BaselineSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)

    @model_validator(mode="after")
    def _cross_validate(self) -> "RunConfig":
        # Constructing the runtime objects runs their own invariant checks.
        self.dynamics.to_params()
        self.episode.to_config(self.mode, self.illumination.to_thresholds())
        self.illumination.to_material()
        self.illumination.to_light()
        return self

    def episode_config(self) -> EpisodeConfig:
        return self.episode.to_config(self.mode, self.illumination.to_thresholds())

    def cw_params(self) -> CwParams:
        return self.dynamics.to_params()

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return self.training.to_config(self.episode.seed if seed is None else seed)


PRESETS = ("default", "smoke", "full-scale")


def preset_config(name: str = "default") -> RunConfig:
    """Named starting points: default, smoke (desk scale), full-scale."""
    if name == "default":
        return RunConfig()
    if name == "smoke":
        return RunConfig(
            episode=EpisodeSection(point_count=30),
            training=TrainingSection(total_timesteps=200_000, eval_interval=25_000,
                                     checkpoint_interval=0),
            evaluation=EvaluationSection(trials=10),
        )
    if name == "full-scale":
        return RunConfig(
            training=TrainingSection(total_timesteps=10_000_000,
                                     eval_interval=100_000,
                                     checkpoint_interval=1_000_000),
            evaluation=EvaluationSection(trials=100),
        )
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


def to_yaml(config: RunConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def from_yaml(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"top-level config must be a mapping, got {type(raw).__name__}")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        locations = ", ".join(
            ".".join(str(part) for part in err["loc"]) or "<root>"
            for err in exc.errors())
        raise ConfigError(f"invalid config fields: {locations}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return from_yaml(path.read_text())


def save_config(config: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_yaml(config))
