"""Sun occlusion and per-point shading for inspection decisions.

Two illumination modes exist.  In binary mode a surface point is inspectable
whenever its shadow ray toward the sun does not re-enter the chief sphere.
Spectral mode additionally shades the point with the Blinn-Phong model and
requires every RGB channel to fall inside a brightness window; washed-out or
dark points are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

IlluminationMode = Literal["binary", "spectral"]

# Radicand values this close to zero are treated as the tangent case, which
# grazes rather than blocks, so no intersection is reported.
TANGENT_TOL = 1e-9

# Shadow rays originate on the sphere surface; lift the origin along the ray
# so the trivial d=0 root never registers as self-occlusion.
SELF_HIT_LIFT = 1e-6


class IlluminationError(ValueError):
    """Raised for invalid illumination inputs."""


def _rgb(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(3)
    return arr


@dataclass(frozen=True)
class SurfaceMaterial:
    """Reflection constants of the chief surface (per-channel, normalized)."""

    k_a: tuple[float, float, float] = (0.4, 0.4, 0.4)
    k_d: tuple[float, float, float] = (0.1, 0.1, 0.1)
    k_s: tuple[float, float, float] = (1.0, 1.0, 1.0)
    alpha: float = 100.0

    def __post_init__(self) -> None:
        for name in ("k_a", "k_d", "k_s"):
            channels = getattr(self, name)
            if len(channels) != 3 or any(not (0.0 <= c <= 1.0) for c in channels):
                raise IlluminationError(f"{name} channels must lie in [0, 1], got {channels}")
        if self.alpha <= 0.0:
            raise IlluminationError(f"shininess must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class LightSource:
    """Ambient/diffuse/specular intensities of the (single) sun light."""

    i_a: tuple[float, float, float] = (1.0, 1.0, 1.0)
    i_d: tuple[float, float, float] = (1.0, 1.0, 1.0)
    i_s: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        for name in ("i_a", "i_d", "i_s"):
            channels = getattr(self, name)
            if len(channels) != 3 or any(not (0.0 <= c <= 1.0) for c in channels):
                raise IlluminationError(f"{name} channels must lie in [0, 1], got {channels}")


@dataclass(frozen=True)
class BrightnessThresholds:
    """Spectral acceptance window: channels outside [too_dark, too_bright] are rejected."""

    too_dark: float = 0.2
    too_bright: float = 0.83

    def __post_init__(self) -> None:
        if not (0.0 <= self.too_dark < self.too_bright <= 1.0):
            raise IlluminationError(
                f"need 0 <= too_dark < too_bright <= 1, got ({self.too_dark}, {self.too_bright})")


@dataclass
class IlluminationVerdict:
    """Outcome of classifying one candidate point."""

    occluded: bool
    rgb: np.ndarray | None      # present in spectral mode only
    inspectable: bool


def ray_sphere_intersect(origin, direction, center, radius: float,
                         min_distance: float = 0.0) -> float | None:
    """Smallest distance along the ray at which it enters the sphere.

    Solves the quadratic |o + d*q - c|^2 = r^2 for d and returns the smallest
    root greater than ``min_distance``, or None when the ray misses.  A
    radicand within TANGENT_TOL of zero is the tangent case and is thrown out.
    """
    origin = np.asarray(origin, dtype=float).reshape(3)
    q = np.asarray(direction, dtype=float).reshape(3)
    center = np.asarray(center, dtype=float).reshape(3)
    qq = float(q @ q)
    if qq == 0.0:
        raise IlluminationError("ray direction must be non-zero")
    oc = origin - center
    b = 2.0 * float(q @ oc)
    c = float(oc @ oc) - radius * radius
    radicand = b * b - 4.0 * qq * c
    if radicand <= TANGENT_TOL:
        return None
    root = math.sqrt(radicand)
    d_near = (-b - root) / (2.0 * qq)
    d_far = (-b + root) / (2.0 * qq)
    for d in (d_near, d_far):
        if d > min_distance:
            return d
    return None


def is_point_lit(point, sun_dir, r_c: float) -> bool:
    """True when the ray from a surface point toward the sun leaves the chief clear."""
    point = np.asarray(point, dtype=float).reshape(3)
    sun_dir = np.asarray(sun_dir, dtype=float).reshape(3)
    lifted = point + SELF_HIT_LIFT * r_c * sun_dir
    hit = ray_sphere_intersect(lifted, sun_dir, np.zeros(3), r_c)
    return hit is None


def lit_mask(points: np.ndarray, sun_dir, r_c: float) -> np.ndarray:
    """Vectorized ``is_point_lit`` over an (N, 3) array of surface points."""
    points = np.asarray(points, dtype=float)
    sun_dir = np.asarray(sun_dir, dtype=float).reshape(3)
    qq = float(sun_dir @ sun_dir)
    lifted = points + SELF_HIT_LIFT * r_c * sun_dir
    b = 2.0 * (lifted @ sun_dir)
    c = np.einsum("ij,ij->i", lifted, lifted) - r_c * r_c
    radicand = b * b - 4.0 * qq * c
    root = np.sqrt(np.maximum(radicand, 0.0))
    d_near = (-b - root) / (2.0 * qq)
    d_far = (-b + root) / (2.0 * qq)
    occluded = (radicand > TANGENT_TOL) & ((d_near > 0.0) | (d_far > 0.0))
    return ~occluded


def blinn_phong_rgb(point, agent_pos, sun_dir, material: SurfaceMaterial,
                    light: LightSource) -> np.ndarray:
    """Blinn-Phong RGB of a surface point seen by the agent, clamped to [0, 1].

    Back-facing diffuse/specular contributions clamp to zero; a viewer exactly
    opposite the light makes the halfway vector degenerate and kills the
    specular term.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    agent_pos = np.asarray(agent_pos, dtype=float).reshape(3)
    sun_dir = np.asarray(sun_dir, dtype=float).reshape(3)

    normal = point / np.linalg.norm(point)
    view = agent_pos - point
    view = view / np.linalg.norm(view)
    halfway_raw = sun_dir + view
    halfway_norm = np.linalg.norm(halfway_raw)

    diffuse = max(0.0, float(sun_dir @ normal))
    if halfway_norm < 1e-12:
        specular = 0.0
    else:
        specular = max(0.0, float((halfway_raw / halfway_norm) @ normal)) ** material.alpha

    rgb = (_rgb(material.k_a) * _rgb(light.i_a)
           + _rgb(material.k_d) * diffuse * _rgb(light.i_d)
           + _rgb(material.k_s) * specular * _rgb(light.i_s))
    return np.clip(rgb, 0.0, 1.0)


def shade_points(points: np.ndarray, agent_pos, sun_dir, material: SurfaceMaterial,
                 light: LightSource) -> np.ndarray:
    """Vectorized ``blinn_phong_rgb``: (N, 3) points -> (N, 3) clamped RGB."""
    points = np.asarray(points, dtype=float)
    agent_pos = np.asarray(agent_pos, dtype=float).reshape(3)
    sun_dir = np.asarray(sun_dir, dtype=float).reshape(3)

    normals = points / np.linalg.norm(points, axis=1, keepdims=True)
    views = agent_pos[None, :] - points
    views = views / np.linalg.norm(views, axis=1, keepdims=True)
    halfway_raw = sun_dir[None, :] + views
    halfway_norm = np.linalg.norm(halfway_raw, axis=1)
    safe = np.maximum(halfway_norm, 1e-12)
    halfway = halfway_raw / safe[:, None]

    diffuse = np.maximum(0.0, normals @ sun_dir)
    spec_cos = np.maximum(0.0, np.einsum("ij,ij->i", halfway, normals))
    specular = np.where(halfway_norm < 1e-12, 0.0, spec_cos ** material.alpha)

    rgb = (_rgb(material.k_a) * _rgb(light.i_a)
           + diffuse[:, None] * _rgb(material.k_d) * _rgb(light.i_d)
           + specular[:, None] * _rgb(material.k_s) * _rgb(light.i_s))
    return np.clip(rgb, 0.0, 1.0)


def within_brightness_window(rgb: np.ndarray, thresholds: BrightnessThresholds) -> np.ndarray:
    """Per-point mask: every channel inside the acceptance window."""
    rgb = np.atleast_2d(np.asarray(rgb, dtype=float))
    ok = (rgb >= thresholds.too_dark) & (rgb <= thresholds.too_bright)
    return np.all(ok, axis=1)


def classify_point(point, agent_pos, sun_dir, mode: IlluminationMode,
                   material: SurfaceMaterial | None = None,
                   light: LightSource | None = None,
                   thresholds: BrightnessThresholds | None = None,
                   r_c: float | None = None) -> IlluminationVerdict:
    """Classify one in-view candidate point under the requested mode.

    The caller guarantees the point is inside the perception cone.  Occlusion
    always defeats inspectability; spectral mode additionally applies the
    brightness window to the shaded RGB.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    radius = float(np.linalg.norm(point)) if r_c is None else r_c
    lit = is_point_lit(point, sun_dir, radius)
    if mode == "binary":
        return IlluminationVerdict(occluded=not lit, rgb=None, inspectable=lit)
    if mode != "spectral":
        raise IlluminationError(f"unknown illumination mode {mode!r}")
    material = material or SurfaceMaterial()
    light = light or LightSource()
    thresholds = thresholds or BrightnessThresholds()
    rgb = blinn_phong_rgb(point, agent_pos, sun_dir, material, light)
    ok = bool(within_brightness_window(rgb, thresholds)[0])
    return IlluminationVerdict(occluded=not lit, rgb=rgb, inspectable=lit and ok)


def inspectable_mask(points: np.ndarray, agent_pos, sun_dir, mode: IlluminationMode,
                     r_c: float,
                     material: SurfaceMaterial | None = None,
                     light: LightSource | None = None,
                     thresholds: BrightnessThresholds | None = None) -> np.ndarray:
    """Batch classification used in the environment's inner loop.

    Returns a boolean mask over ``points`` (assumed in view): lit in binary
    mode, lit and inside the brightness window in spectral mode.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    lit = lit_mask(points, sun_dir, r_c)
    if mode == "binary":
        return lit
    if mode != "spectral":
        raise IlluminationError(f"unknown illumination mode {mode!r}")
    material = material or SurfaceMaterial()
    light = light or LightSource()
    thresholds = thresholds or BrightnessThresholds()
    rgb = shade_points(points, agent_pos, sun_dir, material, light)
    return lit & within_brightness_window(rgb, thresholds)
