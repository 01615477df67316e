"""Surface point generation, perception-cone visibility, and clustering."""

import math

import numpy as np
import pytest

from inspectsim.geometry import (
    GeometryError,
    InspectionPointSet,
    cluster_uninspected,
    generate_sphere_points,
    visible_points,
    visibility_threshold,
)


def random_unit_vectors(rng, count):
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_single_requested_point_sits_at_pole():
    pts = generate_sphere_points(1, 10.0)
    assert pts.count == 1
    np.testing.assert_allclose(pts.points[0], [0.0, 0.0, 10.0], atol=1e-12)


def test_hundred_points_on_radius_with_separation():
    pts = generate_sphere_points(100, 10.0)
    assert abs(pts.count - 100) <= 10  # within +-10% of the request
    radii = np.linalg.norm(pts.points, axis=1)
    np.testing.assert_allclose(radii, 10.0, rtol=1e-9)
    # Minimum pairwise angular separation strictly positive.
    unit = pts.points / 10.0
    cosines = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(cosines, -1.0)
    min_sep = math.degrees(math.acos(float(cosines.max())))
    assert min_sep > 1.0


def test_octant_density_uniform():
    pts = generate_sphere_points(1000, 3.7)
    p = pts.points
    off_boundary = np.all(np.abs(p) > 1e-9 * 3.7, axis=1)
    signs = (p[off_boundary] > 0.0)
    octant_ids = signs[:, 0] * 4 + signs[:, 1] * 2 + signs[:, 2]
    counts = np.bincount(octant_ids.astype(int), minlength=8)
    spread = (counts.max() - counts.min()) / counts.mean()
    assert spread <= 0.20


def test_all_flags_start_uninspected():
    pts = generate_sphere_points(50, 10.0)
    assert pts.inspected.dtype == bool
    assert not pts.inspected.any()
    assert pts.num_inspected == 0


def test_generate_rejects_bad_inputs():
    with pytest.raises(GeometryError):
        generate_sphere_points(0, 10.0)
    with pytest.raises(GeometryError):
        generate_sphere_points(100, 0.0)
    with pytest.raises(GeometryError):
        generate_sphere_points(100, -1.0)


def test_point_set_radius_invariant_enforced():
    good = np.array([[10.0, 0.0, 0.0], [0.0, 10.0, 0.0]])
    InspectionPointSet(points=good, r_c=10.0)
    bad = np.array([[10.0, 0.0, 0.0], [0.0, 9.0, 0.0]])
    with pytest.raises(GeometryError):
        InspectionPointSet(points=bad, r_c=10.0)


def test_subsatellite_point_visible_antipode_not():
    pts = InspectionPointSet(points=np.array([[10.0, 0.0, 0.0], [-10.0, 0.0, 0.0]]),
                             r_c=10.0)
    agent = np.array([100.0, 0.0, 0.0])
    assert visible_points(agent, pts).tolist() == [0]


def test_visibility_threshold_identity():
    # The cone bound r_c * (1 - (d - r_c)/d) collapses to r_c^2 / d.
    rng = np.random.default_rng(11)
    r_c = 10.0
    for _ in range(10_000):
        d = rng.uniform(r_c * (1.0 + 1e-6), 800.0)
        full_form = r_c * (1.0 - (d - r_c) / d)
        simplified = r_c * r_c / d
        assert abs(full_form - simplified) <= 1e-12 * abs(simplified)
        assert visibility_threshold(d, r_c) == pytest.approx(simplified, rel=1e-15)


def test_visible_set_matches_full_form_exactly():
    rng = np.random.default_rng(12)
    pts = generate_sphere_points(200, 10.0)
    for _ in range(200):
        direction = random_unit_vectors(rng, 1)[0]
        agent = direction * rng.uniform(10.5, 800.0)
        d = np.linalg.norm(agent)
        projections = pts.points @ (agent / d)
        full_rhs = pts.r_c * (1.0 - (d - pts.r_c) / d)
        expected = np.flatnonzero(projections >= full_rhs)
        np.testing.assert_array_equal(visible_points(agent, pts), expected)


def test_visible_fraction_grows_with_distance():
    rng = np.random.default_rng(13)
    pts = generate_sphere_points(1000, 10.0)
    direction = random_unit_vectors(rng, 1)[0]
    fractions = []
    for d in (20.0, 50.0, 100.0, 800.0):
        frac = len(visible_points(direction * d, pts)) / pts.count
        fractions.append(frac)
    assert fractions == sorted(fractions)
    assert fractions[-1] < 0.55  # approaches but cannot pass the half-sphere limit


def test_visibility_monotone_along_ray():
    rng = np.random.default_rng(14)
    pts = generate_sphere_points(300, 10.0)
    for _ in range(50):
        direction = random_unit_vectors(rng, 1)[0]
        near = set(visible_points(direction * rng.uniform(11.0, 50.0), pts).tolist())
        far = set(visible_points(direction * rng.uniform(100.0, 800.0), pts).tolist())
        assert near <= far


def test_agent_inside_sphere_rejected():
    pts = generate_sphere_points(10, 10.0)
    with pytest.raises(GeometryError):
        visible_points(np.array([5.0, 0.0, 0.0]), pts)
    with pytest.raises(GeometryError):
        visible_points(np.array([10.0, 0.0, 0.0]), pts)


def test_cluster_all_inspected_gives_zero_vector():
    pts = generate_sphere_points(30, 10.0)
    pts.inspected[:] = True
    result = cluster_uninspected(pts, rng_seed=0)
    np.testing.assert_array_equal(result.direction, np.zeros(3))


def test_cluster_single_uninspected_point():
    pts = generate_sphere_points(30, 10.0)
    pts.inspected[:] = True
    pts.inspected[7] = False
    result = cluster_uninspected(pts, rng_seed=0)
    expected = pts.points[7] / np.linalg.norm(pts.points[7])
    np.testing.assert_allclose(result.direction, expected, atol=1e-12)


def test_cluster_prefers_larger_antipodal_group():
    rng = np.random.default_rng(15)
    r_c = 10.0
    big = random_unit_vectors(rng, 30) * 0.15 + np.array([1.0, 0.0, 0.0])
    small = random_unit_vectors(rng, 10) * 0.15 + np.array([-1.0, 0.0, 0.0])
    points = np.vstack([big, small])
    points = points / np.linalg.norm(points, axis=1, keepdims=True) * r_c
    pts = InspectionPointSet(points=points, r_c=r_c)
    result = cluster_uninspected(pts, rng_seed=3, k_max=2)
    centroid = points[:30].mean(axis=0)
    centroid /= np.linalg.norm(centroid)
    angle = math.degrees(math.acos(float(np.clip(result.direction @ centroid, -1, 1))))
    assert angle < 15.0
    assert sorted(result.cluster_sizes, reverse=True)[0] == 30


def test_cluster_direction_unit_or_zero():
    rng = np.random.default_rng(16)
    pts = generate_sphere_points(100, 10.0)
    for trial in range(25):
        flags = rng.random(pts.count) < rng.uniform(0.0, 1.0)
        pts.inspected[:] = flags
        result = cluster_uninspected(pts, rng_seed=trial)
        norm = np.linalg.norm(result.direction)
        if pts.inspected.all():
            assert norm == 0.0
        else:
            assert abs(norm - 1.0) < 1e-9


def test_cluster_deterministic_in_seed():
    pts = generate_sphere_points(100, 10.0)
    pts.inspected[: pts.count // 2] = True
    a = cluster_uninspected(pts, rng_seed=9)
    b = cluster_uninspected(pts, rng_seed=9)
    np.testing.assert_array_equal(a.direction, b.direction)
    np.testing.assert_array_equal(a.cluster_sizes, b.cluster_sizes)
