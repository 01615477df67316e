"""Chief surface points, perception-cone visibility, and uninspected clustering.

Surface points come from an equal-area latitude/longitude grid (Deserno-style)
computed on the unit sphere and scaled afterwards, so the realized point count
depends only on the requested count, never on the chief radius.  The grid does
not guarantee the requested count exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RADIUS_RTOL = 1e-9


class GeometryError(ValueError):
    """Raised for invalid geometry inputs."""


@dataclass
class InspectionPointSet:
    """Surface points of the chief with per-point inspected flags."""

    points: np.ndarray                      # (N, 3) positions on the sphere [m]
    r_c: float                              # chief radius [m]
    inspected: np.ndarray | None = None     # (N,) bool; default all-uninspected

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3 or len(self.points) < 1:
            raise GeometryError(f"points must be a non-empty (N, 3) array, got shape {self.points.shape}")
        if not (math.isfinite(self.r_c) and self.r_c > 0.0):
            raise GeometryError(f"chief radius must be > 0, got {self.r_c!r}")
        radii = np.linalg.norm(self.points, axis=1)
        if not np.allclose(radii, self.r_c, rtol=RADIUS_RTOL, atol=0.0):
            raise GeometryError("points do not lie on the chief sphere")
        if self.inspected is None:
            self.inspected = np.zeros(len(self.points), dtype=bool)
        else:
            self.inspected = np.asarray(self.inspected, dtype=bool)
            if self.inspected.shape != (len(self.points),):
                raise GeometryError("inspected flags must match the point count")

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def num_inspected(self) -> int:
        return int(self.inspected.sum())

    @property
    def inspected_fraction(self) -> float:
        return self.num_inspected / self.count

    def uninspected_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.inspected)

    def copy(self) -> "InspectionPointSet":
        return InspectionPointSet(points=self.points.copy(), r_c=self.r_c,
                                  inspected=self.inspected.copy())


def generate_sphere_points(requested_count: int, r_c: float) -> InspectionPointSet:
    """Distribute roughly ``requested_count`` near-equal-area points on the chief.

    Rings of constant colatitude start at the pole; each ring holds a number
    of equally spaced points proportional to its circumference (at least one,
    so a degenerate request still yields a pole point).  All flags start
    uninspected.
    """
    if requested_count < 1:
        raise GeometryError(f"requested_count must be >= 1, got {requested_count}")
    if not (math.isfinite(r_c) and r_c > 0.0):
        raise GeometryError(f"chief radius must be > 0, got {r_c!r}")

    cell_area = 4.0 * math.pi / requested_count
    spacing = math.sqrt(cell_area)
    n_rings = max(1, int(round(math.pi / spacing)))
    d_theta = math.pi / n_rings
    d_phi = cell_area / d_theta

    pts: list[tuple[float, float, float]] = []
    for ring in range(n_rings):
        theta = math.pi * ring / n_rings
        sin_t, cos_t = math.sin(theta), math.cos(theta)
        n_in_ring = max(1, int(round(2.0 * math.pi * sin_t / d_phi)))
        for k in range(n_in_ring):
            phi = 2.0 * math.pi * k / n_in_ring
            pts.append((sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t))

    return InspectionPointSet(points=np.asarray(pts) * r_c, r_c=r_c)


def visible_points(agent_pos: np.ndarray, pts: InspectionPointSet) -> np.ndarray:
    """Indices of surface points inside the agent's perception cone.

    A point p is in view iff (p_a/|p_a|) . p >= r_c^2/|p_a| (the cone
    condition with its right side simplified).  Boundary points count as
    visible.  The agent must be strictly outside the sphere.
    """
    agent_pos = np.asarray(agent_pos, dtype=float).reshape(3)
    dist = float(np.linalg.norm(agent_pos))
    if dist <= pts.r_c:
        raise GeometryError(f"agent at distance {dist:.3f} is not outside the chief (r_c={pts.r_c})")
    projections = pts.points @ (agent_pos / dist)
    return np.flatnonzero(projections >= pts.r_c * pts.r_c / dist)


def visibility_threshold(agent_distance: float, r_c: float) -> float:
    """Right side of the perception-cone inequality, in simplified form."""
    return r_c * r_c / agent_distance


@dataclass
class ClusterResult:
    """Direction to the most-populous cluster of uninspected points."""

    direction: np.ndarray       # unit vector, or zeros when fully inspected
    cluster_sizes: np.ndarray   # per-cluster point counts


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd iterations; deterministic given the generator state."""
    centroids = points[rng.choice(len(points), size=k, replace=False)].copy()
    labels = None
    for _iteration in range(max_iter):
        dists = np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return labels, centroids


def cluster_uninspected(pts: InspectionPointSet, rng_seed: int,
                        k_max: int = 10, max_iter: int = 50) -> ClusterResult:
    """Cluster the uninspected points and point at the largest cluster.

    Runs k-means with k = min(k_max, #uninspected), seeded deterministically;
    ties in the largest-cluster selection go to the lowest cluster index.
    Returns a zero direction when every point is inspected (terminal
    observation only).
    """
    remaining = pts.points[~pts.inspected]
    if len(remaining) == 0:
        return ClusterResult(direction=np.zeros(3), cluster_sizes=np.zeros(0, dtype=int))

    k = min(k_max, len(remaining))
    rng = np.random.default_rng(rng_seed)
    labels, centroids = _kmeans(remaining, k, rng, max_iter)
    sizes = np.bincount(labels, minlength=k)
    best = int(np.argmax(sizes))  # argmax takes the lowest index on ties
    direction = centroids[best]
    norm = float(np.linalg.norm(direction))
    if norm < 1e-12:
        # antipodal members cancelled out; fall back to the first member
        direction = remaining[labels == best][0]
        norm = float(np.linalg.norm(direction))
    return ClusterResult(direction=direction / norm, cluster_sizes=sizes)
