"""Episodic inspection task tying dynamics, geometry, and illumination together.

One environment instance owns one episode at a time: it spawns the deputy on
a randomized shell around the chief, advances deputy and sun at a fixed
timestep under thrust actions, marks surface points that are in view and
adequately illuminated, and pays a reward of new-points minus fuel minus a
crash penalty.  Episodes end on crash, escape, full inspection, or the step
horizon.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np

from .dynamics import (
    ControlInput,
    CwParams,
    DeputyState,
    SunState,
    propagate_deputy,
    propagate_sun,
    sun_unit_vector,
    wrap_angle,
)
from .geometry import InspectionPointSet, cluster_uninspected, generate_sphere_points, visible_points
from .illumination import (
    BrightnessThresholds,
    IlluminationMode,
    LightSource,
    SurfaceMaterial,
    inspectable_mask,
)

TerminationReason = Literal["running", "crash", "escape", "complete", "horizon"]

W_MIN = 0.001
W_MAX = 0.1
W_INCREMENT = 0.00005
W_EVAL = 0.1

TRAJECTORY_FIELDS = (
    "step", "t", "x", "y", "z", "vx", "vy", "vz", "fx", "fy", "fz",
    "theta_s", "new_points", "cum_points", "r_points", "r_dv", "r_crash",
    "total_reward", "done", "reason",
)


class EnvironmentError_(ValueError):
    """Raised for invalid environment configuration or misuse."""


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: spawn ranges, termination radii, sensing mode, point budget."""

    max_steps: int = 1224
    spawn_radius: tuple[float, float] = (50.0, 100.0)
    spawn_speed: tuple[float, float] = (0.0, 0.3)
    crash_radius: float = 15.0          # chief radius + buffer
    escape_radius: float = 800.0
    mode: IlluminationMode = "binary"
    point_count: int = 100
    chief_radius: float = 10.0
    seed: int = 0
    thresholds: BrightnessThresholds = field(default_factory=BrightnessThresholds)
    pos_scale: float = 100.0            # observation normalization [m]
    vel_scale: float = 0.5              # observation normalization [m/s]

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise EnvironmentError_(f"max_steps must be >= 1, got {self.max_steps}")
        if not (self.chief_radius < self.crash_radius < self.spawn_radius[0]):
            raise EnvironmentError_(
                f"need chief_radius < crash_radius < min spawn radius, got "
                f"{self.chief_radius}, {self.crash_radius}, {self.spawn_radius[0]}")
        if not (self.spawn_radius[0] <= self.spawn_radius[1] < self.escape_radius):
            raise EnvironmentError_(
                f"need spawn radii inside escape radius, got "
                f"{self.spawn_radius} vs {self.escape_radius}")
        if not (0.0 <= self.spawn_speed[0] <= self.spawn_speed[1]):
            raise EnvironmentError_(f"bad spawn speed interval {self.spawn_speed}")
        if self.point_count < 1:
            raise EnvironmentError_(f"point_count must be >= 1, got {self.point_count}")
        if self.mode not in ("binary", "spectral"):
            raise EnvironmentError_(f"unknown illumination mode {self.mode!r}")


@dataclass
class Observation:
    """Policy input: deputy state, sun angle, inspection progress, cluster cue.

    Raw physical values live in the named fields; ``vector`` carries the
    fixed-scale normalized 11-vector actually fed to the network (positions /
    pos_scale, velocities / vel_scale, angle / 2pi, count / total points).
    """

    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    theta_s: float
    points_inspected: int
    pcx: float
    pcy: float
    pcz: float
    vector: np.ndarray | None = field(repr=False, default=None)

    def as_raw_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz,
                         self.theta_s, float(self.points_inspected),
                         self.pcx, self.pcy, self.pcz])


@dataclass
class RewardBreakdown:
    """Per-step reward decomposition; total is the exact sum of the terms."""

    r_points: float
    r_dv: float
    r_crash: float
    total: float
    w: float


@dataclass
class StepResult:
    observation: Observation
    reward: RewardBreakdown
    done: bool
    reason: TerminationReason
    new_point_indices: np.ndarray


def compute_reward(new_points: int, action: ControlInput, pos: np.ndarray, w: float,
                   params: CwParams, crash_radius: float = 15.0) -> RewardBreakdown:
    """Reward terms for one step: points found, fuel burned, crash penalty."""
    r_points = 0.1 * new_points
    delta_v = action.l1_norm() / params.m * params.dt
    r_dv = -w * delta_v
    pos = np.asarray(pos, dtype=float)
    r_crash = -1.0 if float(np.linalg.norm(pos)) < crash_radius else 0.0
    total = r_points + r_dv + r_crash
    return RewardBreakdown(r_points=r_points, r_dv=r_dv, r_crash=r_crash, total=total, w=w)


def update_dv_weight(current_w: float, recent_mean_inspected_pct: float,
                     steps_above: int, *, persistence: int = 1500,
                     high_pct: float = 90.0, low_pct: float = 80.0,
                     increment: float = W_INCREMENT) -> float:
    """One curriculum decision for the fuel-penalty weight.

    Raises the weight by one increment once the mean inspected percentage has
    stayed above ``high_pct`` for ``persistence`` consecutive steps, lowers it
    by the same amount when the mean sits below ``low_pct``, and clamps to
    [W_MIN, W_MAX].
    """
    w = current_w
    if recent_mean_inspected_pct > high_pct and steps_above >= persistence:
        w += increment
    elif recent_mean_inspected_pct < low_pct:
        w -= increment
    return min(max(w, W_MIN), W_MAX)


class DvWeightScheduler:
    """Training-global curriculum state for the fuel-penalty weight.

    Tracks the mean final inspected percentage over a rolling window of
    completed episodes.  The weight rises after the mean has held above the
    high mark for a full persistence interval of environment steps, and falls
    by one increment each time the mean crosses below the low mark.
    """

    def __init__(self, w: float = W_MIN, *, persistence: int = 1500,
                 high_pct: float = 90.0, low_pct: float = 80.0,
                 window_episodes: int = 10, increment: float = W_INCREMENT):
        self.w = w
        self.persistence = persistence
        self.high_pct = high_pct
        self.low_pct = low_pct
        self.increment = increment
        self._episode_pcts: deque[float] = deque(maxlen=window_episodes)
        self._steps_above = 0
        self._prev_mean: float | None = None

    @property
    def rolling_mean(self) -> float | None:
        if not self._episode_pcts:
            return None
        return sum(self._episode_pcts) / len(self._episode_pcts)

    def record_episode(self, final_inspected_pct: float) -> None:
        self._episode_pcts.append(final_inspected_pct)

    def record_step(self) -> float:
        """Advance one environment step; returns the (possibly updated) weight."""
        mean = self.rolling_mean
        if mean is None:
            return self.w
        self._steps_above = self._steps_above + 1 if mean > self.high_pct else 0
        crossed_down = (self._prev_mean is not None
                        and self._prev_mean >= self.low_pct and mean < self.low_pct)
        if self._steps_above >= self.persistence:
            self.w = update_dv_weight(self.w, mean, self._steps_above,
                                      persistence=self.persistence,
                                      high_pct=self.high_pct, low_pct=self.low_pct,
                                      increment=self.increment)
            self._steps_above = 0
        elif crossed_down:
            self.w = update_dv_weight(self.w, mean, 0,
                                      persistence=self.persistence,
                                      high_pct=self.high_pct, low_pct=self.low_pct,
                                      increment=self.increment)
        self._prev_mean = mean
        return self.w

    def state_dict(self) -> dict:
        return {
            "w": self.w,
            "steps_above": self._steps_above,
            "prev_mean": self._prev_mean,
            "episode_pcts": list(self._episode_pcts),
            "window_episodes": self._episode_pcts.maxlen,
            "persistence": self.persistence,
            "high_pct": self.high_pct,
            "low_pct": self.low_pct,
            "increment": self.increment,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "DvWeightScheduler":
        sched = cls(w=state["w"], persistence=state["persistence"],
                    high_pct=state["high_pct"], low_pct=state["low_pct"],
                    window_episodes=state["window_episodes"],
                    increment=state["increment"])
        sched._steps_above = state["steps_above"]
        sched._prev_mean = state["prev_mean"]
        sched._episode_pcts.extend(state["episode_pcts"])
        return sched


class InspectionEnv:
    """Single-episode inspection environment (one instance per worker)."""

    def __init__(self, cw: CwParams | None = None, cfg: EpisodeConfig | None = None,
                 material: SurfaceMaterial | None = None,
                 light: LightSource | None = None):
        self.cw = cw or CwParams()
        self.cfg = cfg or EpisodeConfig()
        self.material = material or SurfaceMaterial()
        self.light = light or LightSource()
        self.dv_weight = W_MIN
        self._reset_counter = 0
        self._episode_seed: int | None = None
        self.deputy: DeputyState | None = None
        self.sun: SunState | None = None
        self.points: InspectionPointSet | None = None
        self.step_count = 0
        self.done = True
        self.reason: TerminationReason = "running"
        self.episode_delta_v = 0.0
        self.episode_reward = 0.0

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: int | None = None) -> Observation:
        """Start a new episode; identical seeds give identical episodes.

        The spawn shell and initial velocity are drawn in spherical
        coordinates (azimuth, elevation, magnitude) and converted to
        Cartesian; the draw order below is part of the determinism contract.
        """
        if seed is None:
            seed = int(np.random.SeedSequence(
                entropy=self.cfg.seed, spawn_key=(self._reset_counter,)).generate_state(1)[0])
        self._reset_counter += 1
        self._episode_seed = int(seed)
        rng = np.random.default_rng(seed)

        pos_azimuth = rng.uniform(0.0, 2.0 * math.pi)
        pos_elevation = rng.uniform(-math.pi / 2.0, math.pi / 2.0)
        radius = rng.uniform(*self.cfg.spawn_radius)
        vel_azimuth = rng.uniform(0.0, 2.0 * math.pi)
        vel_elevation = rng.uniform(-math.pi / 2.0, math.pi / 2.0)
        speed = rng.uniform(*self.cfg.spawn_speed)
        theta_s = rng.uniform(0.0, 2.0 * math.pi)

        self.deputy = DeputyState(
            x=radius * math.cos(pos_elevation) * math.cos(pos_azimuth),
            y=radius * math.cos(pos_elevation) * math.sin(pos_azimuth),
            z=radius * math.sin(pos_elevation),
            vx=speed * math.cos(vel_elevation) * math.cos(vel_azimuth),
            vy=speed * math.cos(vel_elevation) * math.sin(vel_azimuth),
            vz=speed * math.sin(vel_elevation),
        )
        self.sun = SunState(theta_s=wrap_angle(theta_s))
        self.points = generate_sphere_points(self.cfg.point_count, self.cfg.chief_radius)
        self.step_count = 0
        self.done = False
        self.reason = "running"
        self.episode_delta_v = 0.0
        self.episode_reward = 0.0
        return self.build_observation()

    def step(self, action) -> StepResult:
        """Clamp thrust, advance physics, sense points, pay reward, terminate."""
        if self.done or self.deputy is None:
            raise EnvironmentError_("cannot step a finished episode; call reset() first")
        if not isinstance(action, ControlInput):
            action = ControlInput.from_vector(np.asarray(action, dtype=float))
        action = action.clamped(self.cw.u_max)

        self.deputy = propagate_deputy(self.deputy, action, self.cw)
        self.sun = propagate_sun(self.sun, self.cw)
        self.step_count += 1

        new_indices = self._sense()
        self.points.inspected[new_indices] = True

        reward = compute_reward(len(new_indices), action, self.deputy.position,
                                self.dv_weight, self.cw, self.cfg.crash_radius)
        self.episode_delta_v += action.l1_norm() / self.cw.m * self.cw.dt
        self.episode_reward += reward.total

        dist = self.deputy.radius
        if dist < self.cfg.crash_radius:
            self.done, self.reason = True, "crash"
        elif dist > self.cfg.escape_radius:
            self.done, self.reason = True, "escape"
        elif bool(self.points.inspected.all()):
            self.done, self.reason = True, "complete"
        elif self.step_count >= self.cfg.max_steps:
            self.done, self.reason = True, "horizon"

        return StepResult(observation=self.build_observation(), reward=reward,
                          done=self.done, reason=self.reason,
                          new_point_indices=new_indices)

    def _sense(self) -> np.ndarray:
        """Indices newly inspected at the post-step state."""
        agent = self.deputy.position
        if float(np.linalg.norm(agent)) <= self.points.r_c:
            return np.zeros(0, dtype=int)  # inside the chief: crash handles it
        in_view = visible_points(agent, self.points)
        if len(in_view) == 0:
            return np.zeros(0, dtype=int)
        candidates = in_view[~self.points.inspected[in_view]]
        if len(candidates) == 0:
            return candidates
        ok = inspectable_mask(self.points.points[candidates], agent,
                              sun_unit_vector(self.sun), self.cfg.mode,
                              self.points.r_c, self.material, self.light,
                              self.cfg.thresholds)
        return candidates[ok]

    # -- observation ---------------------------------------------------------

    def build_observation(self) -> Observation:
        """Assemble the 11-element observation at the current state."""
        cluster_seed = int(np.random.SeedSequence(
            entropy=self._episode_seed, spawn_key=(self.step_count,)).generate_state(1)[0])
        cluster = cluster_uninspected(self.points, cluster_seed)
        d = self.deputy
        obs = Observation(
            x=d.x, y=d.y, z=d.z, vx=d.vx, vy=d.vy, vz=d.vz,
            theta_s=self.sun.theta_s,
            points_inspected=self.points.num_inspected,
            pcx=float(cluster.direction[0]),
            pcy=float(cluster.direction[1]),
            pcz=float(cluster.direction[2]),
        )
        obs.vector = np.array([
            d.x / self.cfg.pos_scale, d.y / self.cfg.pos_scale, d.z / self.cfg.pos_scale,
            d.vx / self.cfg.vel_scale, d.vy / self.cfg.vel_scale, d.vz / self.cfg.vel_scale,
            self.sun.theta_s / (2.0 * math.pi),
            self.points.num_inspected / self.points.count,
            obs.pcx, obs.pcy, obs.pcz,
        ])
        return obs

    # -- bookkeeping ---------------------------------------------------------

    @property
    def inspected_pct(self) -> float:
        return 100.0 * self.points.num_inspected / self.points.count

    @property
    def elapsed_time(self) -> float:
        return self.step_count * self.cw.dt

    def snapshot(self) -> dict:
        """JSON-serializable mid-episode state for checkpoint/resume."""
        return {
            "deputy": self.deputy.as_vector().tolist() if self.deputy else None,
            "sun": self.sun.theta_s if self.sun else None,
            "inspected": self.points.inspected.astype(int).tolist() if self.points else None,
            "step_count": self.step_count,
            "done": self.done,
            "reason": self.reason,
            "episode_delta_v": self.episode_delta_v,
            "episode_reward": self.episode_reward,
            "episode_seed": self._episode_seed,
            "reset_counter": self._reset_counter,
            "dv_weight": self.dv_weight,
        }

    def restore(self, snap: dict) -> None:
        if snap["deputy"] is not None:
            self.deputy = DeputyState.from_vector(np.asarray(snap["deputy"]))
            self.sun = SunState(theta_s=snap["sun"])
            self.points = generate_sphere_points(self.cfg.point_count, self.cfg.chief_radius)
            self.points.inspected[:] = np.asarray(snap["inspected"], dtype=bool)
        self.step_count = snap["step_count"]
        self.done = snap["done"]
        self.reason = snap["reason"]
        self.episode_delta_v = snap["episode_delta_v"]
        self.episode_reward = snap["episode_reward"]
        self._episode_seed = snap["episode_seed"]
        self._reset_counter = snap["reset_counter"]
        self.dv_weight = snap["dv_weight"]


def trajectory_record(step: int, t: float, deputy: DeputyState, action: ControlInput,
                      sun: SunState, new_points: int, cum_points: int,
                      reward: RewardBreakdown, done: bool, reason: TerminationReason) -> dict:
    """One trajectory-log row with the fixed field order."""
    return {
        "step": step, "t": t,
        "x": deputy.x, "y": deputy.y, "z": deputy.z,
        "vx": deputy.vx, "vy": deputy.vy, "vz": deputy.vz,
        "fx": action.fx, "fy": action.fy, "fz": action.fz,
        "theta_s": sun.theta_s,
        "new_points": new_points, "cum_points": cum_points,
        "r_points": reward.r_points, "r_dv": reward.r_dv, "r_crash": reward.r_crash,
        "total_reward": reward.total,
        "done": done, "reason": reason,
    }


def write_trajectory(records: list[dict], stream: IO[str]) -> None:
    """Write trajectory rows as JSON Lines, one record per step."""
    for rec in records:
        stream.write(json.dumps(rec) + "\n")
