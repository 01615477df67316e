"""Scripted controllers: no-op, random, and a sun-tracking stationkeeper.

These serve as sanity baselines for the environment and as an
RL-independent demonstration that full surface coverage is achievable
inside one episode horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .environment import InspectionEnv, Observation


class Controller(Protocol):
    """Anything that can drive an episode: reset once, then act each step."""

    name: str

    def reset(self, env: InspectionEnv) -> None: ...

    def act(self, obs: Observation, env: InspectionEnv) -> np.ndarray: ...


@dataclass(frozen=True)
class BaselineSpec:
    """Named scripted controller plus its tuning knobs."""

    controller_id: str = "sun_sync"
    gains: dict = field(default_factory=dict)

    VALID_IDS = ("zero_thrust", "random", "sun_sync")

    def __post_init__(self) -> None:
        if self.controller_id not in self.VALID_IDS:
            raise ValueError(
                f"unknown controller id {self.controller_id!r}; expected one of {self.VALID_IDS}")


class ZeroThrustController:
    """Never fires a thruster; drifts on the natural relative motion."""

    name = "zero_thrust"

    def reset(self, env: InspectionEnv) -> None:
        pass

    def act(self, obs: Observation, env: InspectionEnv) -> np.ndarray:
        return np.zeros(3)


class RandomController:
    """Uniform random thrust on each axis, reproducible from its seed."""

    name = "random"

    def __init__(self, seed: int = 0, scale: float = 1.0):
        self.seed = seed
        self.scale = scale
        self._rng = np.random.default_rng(seed)

    def reset(self, env: InspectionEnv) -> None:
        self._rng = np.random.default_rng(self.seed)

    def act(self, obs: Observation, env: InspectionEnv) -> np.ndarray:
        return self._rng.uniform(-self.scale, self.scale, size=3)


class SunSyncController:
    """PD stationkeeper that rides the day side while sweeping in latitude.

    The reference point sits at a fixed radius, leads the sun azimuth by a
    small angle, and oscillates in latitude through one full sinusoid over
    two sun revolutions, so every surface point is eventually both lit and
    inside the perception cone.  The reference moves under slew-rate and
    approach-rate caps so the initial transit from an arbitrary spawn stays
    smooth, and a proportional-derivative rule converts tracking error to
    thrust.
    """

    name = "sun_sync"

    def __init__(self, station_radius: float = 40.0, lat_max_deg: float = 50.0,
                 lead_deg: float = 25.0, slew_rate: float = 0.004,
                 approach_rate: float = 0.25, kp: float = 0.002, kd: float = 0.09,
                 barrier_radius: float = 25.0, barrier_gain: float = 0.01):
        self.station_radius = station_radius
        self.lat_max = math.radians(lat_max_deg)
        self.lead = math.radians(lead_deg)
        self.slew_rate = slew_rate
        self.approach_rate = approach_rate
        self.kp = kp
        self.kd = kd
        self.barrier_radius = barrier_radius
        self.barrier_gain = barrier_gain
        self._ref_dir: np.ndarray | None = None
        self._ref_radius = 0.0
        self._prev_ref: np.ndarray | None = None

    def reset(self, env: InspectionEnv) -> None:
        pos = env.deputy.position
        self._ref_radius = float(np.linalg.norm(pos))
        self._ref_dir = pos / self._ref_radius
        self._prev_ref = pos.copy()

    def _target_direction(self, t: float, theta_s: float, n: float) -> np.ndarray:
        lat_period = 4.0 * math.pi / n  # two sun revolutions
        lat = self.lat_max * math.sin(2.0 * math.pi * t / lat_period)
        az = theta_s + self.lead
        return np.array([math.cos(lat) * math.cos(az),
                         math.cos(lat) * math.sin(az),
                         math.sin(lat)])

    @staticmethod
    def _slerp_toward(current: np.ndarray, target: np.ndarray, max_angle: float) -> np.ndarray:
        cos_angle = float(np.clip(np.dot(current, target), -1.0, 1.0))
        angle = math.acos(cos_angle)
        if angle <= max_angle:
            return target
        if angle > math.pi - 1e-8:  # antipodal: rotate within any containing plane
            axis = np.cross(current, np.array([0.0, 0.0, 1.0]))
            if np.linalg.norm(axis) < 1e-8:
                axis = np.cross(current, np.array([1.0, 0.0, 0.0]))
            perp = np.cross(axis / np.linalg.norm(axis), current)
            out = math.cos(max_angle) * current + math.sin(max_angle) * perp
        else:
            out = (math.sin(angle - max_angle) * current
                   + math.sin(max_angle) * target) / math.sin(angle)
        return out / np.linalg.norm(out)

    def act(self, obs: Observation, env: InspectionEnv) -> np.ndarray:
        cw = env.cw
        t = env.elapsed_time
        target = self._target_direction(t, obs.theta_s, cw.n)
        self._ref_dir = self._slerp_toward(self._ref_dir, target, self.slew_rate * cw.dt)
        dr = self.station_radius - self._ref_radius
        max_dr = self.approach_rate * cw.dt
        self._ref_radius += float(np.clip(dr, -max_dr, max_dr))

        p_ref = self._ref_radius * self._ref_dir
        v_ref = (p_ref - self._prev_ref) / cw.dt
        self._prev_ref = p_ref

        pos = np.array([obs.x, obs.y, obs.z])
        vel = np.array([obs.vx, obs.vy, obs.vz])
        accel = self.kp * (p_ref - pos) + self.kd * (v_ref - vel)

        dist = float(np.linalg.norm(pos))
        if dist < self.barrier_radius and dist > 1e-9:
            accel += self.barrier_gain * (self.barrier_radius - dist) * pos / dist

        force = cw.m * accel
        return np.clip(force, -cw.u_max, cw.u_max)


def make_controller(spec: BaselineSpec) -> Controller:
    """Instantiate the controller named by a BaselineSpec."""
    if spec.controller_id == "zero_thrust":
        factory = ZeroThrustController
    elif spec.controller_id == "random":
        factory = RandomController
    else:
        factory = SunSyncController
    try:
        return factory(**spec.gains)
    except TypeError as exc:
        raise ValueError(
            f"bad gains for {spec.controller_id!r}: {exc}") from None
