"""Relative-motion and sun-angle propagation for the inspection scenario.

The deputy moves under linearized Clohessy-Wiltshire dynamics about a chief
that is fixed at the origin of Hill's frame.  Propagation over one control
step uses the exact discrete-time solution (matrix exponential of the
augmented system) with a zero-order-hold thrust, so a single step is
bit-reproducible and free of integration error.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

TWO_PI = 2.0 * math.pi


class DynamicsError(ValueError):
    """Raised for invalid dynamics inputs (non-finite state, bad parameters)."""


@dataclass(frozen=True)
class CwParams:
    """Scenario constants: mean motion, deputy mass, thrust bound, timestep."""

    n: float = 0.001027   # mean motion [rad/s]
    m: float = 12.0       # deputy mass [kg]
    u_max: float = 1.0    # per-axis thrust bound [N]
    dt: float = 10.0      # control timestep [s]

    def __post_init__(self) -> None:
        for name in ("n", "m", "u_max", "dt"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise DynamicsError(f"CwParams.{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class DeputyState:
    """Deputy position [m] and velocity [m/s] in Hill's frame."""

    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float

    def __post_init__(self) -> None:
        vec = (self.x, self.y, self.z, self.vx, self.vy, self.vz)
        if not all(math.isfinite(v) for v in vec):
            raise DynamicsError(f"non-finite deputy state: {vec}")

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "DeputyState":
        arr = np.asarray(vec, dtype=float).reshape(6)
        return cls(*arr.tolist())

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz], dtype=float)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz], dtype=float)

    @property
    def radius(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class ControlInput:
    """Per-axis thrust [N]."""

    fx: float = 0.0
    fy: float = 0.0
    fz: float = 0.0

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "ControlInput":
        arr = np.asarray(vec, dtype=float).reshape(3)
        return cls(*arr.tolist())

    def as_vector(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.fz], dtype=float)

    def clamped(self, u_max: float) -> "ControlInput":
        return ControlInput(
            fx=min(max(self.fx, -u_max), u_max),
            fy=min(max(self.fy, -u_max), u_max),
            fz=min(max(self.fz, -u_max), u_max),
        )

    def l1_norm(self) -> float:
        return abs(self.fx) + abs(self.fy) + abs(self.fz)


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return wrapped if wrapped < TWO_PI else 0.0


@dataclass(frozen=True)
class SunState:
    """Sun angle from the Hill-frame x axis, wrapped to [0, 2*pi)."""

    theta_s: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta_s):
            raise DynamicsError(f"non-finite sun angle: {self.theta_s!r}")
        object.__setattr__(self, "theta_s", wrap_angle(self.theta_s))


def cw_system_matrices(params: CwParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (A, B) of the relative-motion state-space model."""
    n = params.n
    a = np.zeros((6, 6))
    a[0, 3] = a[1, 4] = a[2, 5] = 1.0
    a[3, 0] = 3.0 * n * n
    a[3, 4] = 2.0 * n
    a[4, 3] = -2.0 * n
    a[5, 2] = -n * n
    b = np.zeros((6, 3))
    b[3, 0] = b[4, 1] = b[5, 2] = 1.0 / params.m
    return a, b


@functools.lru_cache(maxsize=32)
def discretize(params: CwParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization (Ad, Bd) over one timestep.

    Computed once per parameter set from the matrix exponential of the
    augmented [[A, B], [0, 0]] system.
    """
    a, b = cw_system_matrices(params)
    aug = np.zeros((9, 9))
    aug[:6, :6] = a
    aug[:6, 6:] = b
    phi = expm(aug * params.dt)
    ad = phi[:6, :6].copy()
    bd = phi[:6, 6:].copy()
    ad.setflags(write=False)
    bd.setflags(write=False)
    return ad, bd


def propagate_deputy(state: DeputyState, u: ControlInput, params: CwParams) -> DeputyState:
    """Advance the deputy one timestep under constant (clamped) thrust."""
    u = u.clamped(params.u_max)
    ad, bd = discretize(params)
    nxt = ad @ state.as_vector() + bd @ u.as_vector()
    return DeputyState.from_vector(nxt)


def propagate_sun(sun: SunState, params: CwParams, dt: float | None = None) -> SunState:
    """Advance the sun angle by one timestep: theta' = wrap(theta - n*dt)."""
    step = params.dt if dt is None else dt
    return SunState(theta_s=wrap_angle(sun.theta_s - params.n * step))


def sun_unit_vector(sun: SunState) -> np.ndarray:
    """Unit vector from the chief's center toward the sun (in the x-y plane)."""
    return np.array([math.cos(sun.theta_s), math.sin(sun.theta_s), 0.0])
