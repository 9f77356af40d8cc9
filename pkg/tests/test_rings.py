import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shaperet import shapes
from shaperet.mesh import bbox
from shaperet.rings import (DegenerateRingError, EmptyRingError, Polyline, extract_ring, histogram_sample,
                            resample_ring, ring_radii, ring_set)

from conftest import random_rotation


def circle(r, n=400, center=(0.0, 0.0, 0.0)):
    t = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([r * np.cos(t), r * np.sin(t), np.zeros(n)]) + center
    return Polyline(pts, center=np.asarray(center, float), axis=np.array([0.0, 0.0, 1.0]))


class TestRadii:
    def test_unit_diagonal(self):
        np.testing.assert_allclose(ring_radii(1.0, 5), [0.0075, 0.015, 0.0225, 0.03, 0.0375], rtol=1e-15)

    def test_sqrt3_step(self):
        assert ring_radii(np.sqrt(3), 5)[0] == pytest.approx(0.0129904, abs=1e-7)

    def test_single_ring(self):
        np.testing.assert_allclose(ring_radii(2.0, 1), [0.075])

    @pytest.mark.parametrize("b", [0.0, -1.0])
    def test_bad_diagonal(self, b):
        with pytest.raises(ValueError):
            ring_radii(b, 5)


class TestHistogramSample:
    def test_twenty_values(self):
        np.testing.assert_array_equal(histogram_sample(np.arange(20)), [0, 2, 6, 10, 13, 17, 19])

    def test_constant(self):
        np.testing.assert_array_equal(histogram_sample(np.full(13, 2.5)), np.full(7, 2.5))

    def test_seven_values_kept(self):
        v = np.array([5.0, 1.0, 3.0, 2.0, 7.0, 4.0, 6.0])
        np.testing.assert_array_equal(histogram_sample(v), np.sort(v))

    def test_empty(self):
        with pytest.raises(ValueError):
            histogram_sample([])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
    def test_sorted_subset(self, values):
        out = histogram_sample(values)
        assert len(out) == 7
        assert np.all(np.diff(out) >= 0)
        assert set(out.tolist()) <= set(float(v) for v in values)


class TestResample:
    def test_ideal_circle_gives_twenty(self):
        r = 0.3
        s = resample_ring(circle(r, 2000), 2 * np.pi * r / 20)
        assert len(s.points) == 20
        gaps = np.linalg.norm(np.diff(np.vstack([s.points, s.points[:1]]), axis=0), axis=1)
        np.testing.assert_allclose(gaps, gaps[0], rtol=1e-3)

    def test_longer_ring_gives_floor_count(self):
        r = 0.3
        s = resample_ring(circle(1.05 * r, 2000), 2 * np.pi * r / 20)
        assert len(s.points) == 21

    def test_degenerate(self):
        with pytest.raises(DegenerateRingError):
            resample_ring(circle(0.001, 50), 10 * 2 * np.pi * 0.001)

    def test_start_follows_reference(self):
        s = resample_ring(circle(1.0, 3600), 2 * np.pi / 20, reference=(0.0, 1.0, 0.0))
        np.testing.assert_allclose(s.points[0], [0.0, 1.0, 0.0], atol=1e-3)

    def test_rigid_motion_covariance(self, rng):
        rot = random_rotation(rng)
        shift = np.array([0.3, -1.0, 2.0])
        base = circle(0.5, 777)
        ref = np.array([0.2, 0.9, 0.1])
        a = resample_ring(base, 0.1, ref)
        moved = Polyline(base.points @ rot.T + shift, center=shift, axis=rot @ base.axis)
        b = resample_ring(moved, 0.1, rot @ ref)
        np.testing.assert_allclose(b.points, a.points @ rot.T + shift, atol=1e-9)


class TestExtract:
    def test_planar_perimeter(self):
        fine = shapes.flat_grid(81, 2.0)
        poly = extract_ring(fine, 40 * 81 + 40, 0.1)
        assert poly.length == pytest.approx(2 * np.pi * 0.1, rel=0.01)

    def test_coarse_planar_ring_is_inscribed(self, grid):
        poly = extract_ring(grid, 220, 0.1)
        assert 0.9 * 2 * np.pi * 0.1 < poly.length < 2 * np.pi * 0.1

    def test_points_on_sphere(self, grid):
        poly = extract_ring(grid, 220, 0.1)
        d = np.linalg.norm(poly.points - grid.vertices[220], axis=1)
        assert np.abs(d - 0.1).max() < 1e-9 * 0.1

    def test_sphere_section(self, sphere4_r2):
        m = shapes.icosphere(4)
        poly = extract_ring(m, 0, 0.5)
        expected = 2 * np.pi * 0.5 * np.sqrt(1 - 0.25 / 4)
        assert poly.length == pytest.approx(expected, rel=0.02)

    def test_counterclockwise_about_normal(self, sphere3):
        v = 10
        poly = extract_ring(sphere3, v, 0.3)
        c = sphere3.vertices[v]
        rel = poly.points - c
        turn = np.cross(rel, np.roll(rel, -1, axis=0)).sum(axis=0)
        assert turn @ sphere3.vertex_normals[v] > 0

    def test_barycentric_points_on_surface(self, sphere3):
        poly = extract_ring(sphere3, 3, 0.25)
        corners = sphere3.vertices[sphere3.faces[poly.faces]]
        recon = np.einsum("nk,nkd->nd", poly.bary0, corners)
        assert np.abs(recon - poly.points).max() < 1e-9

    def test_huge_radius_is_empty(self, sphere3):
        with pytest.raises(EmptyRingError):
            extract_ring(sphere3, 0, 10 * bbox(sphere3).diagonal)

    def test_non_positive_radius(self, sphere3):
        with pytest.raises(ValueError):
            extract_ring(sphere3, 0, 0.0)


class TestRingSet:
    def test_radii_and_counts(self, sphere3):
        radii = ring_radii(bbox(sphere3).diagonal, 5)
        rs = ring_set(sphere3, 7, radii)
        np.testing.assert_array_equal(rs.radii, radii)
        assert len(rs.rings) == 5
        for ring in rs.rings:
            assert ring is not None and len(ring.points) >= 3
            np.testing.assert_allclose(ring.bary.sum(axis=1), 1.0, atol=1e-12)

    def test_oversized_ring_is_none(self, sphere3):
        rs = ring_set(sphere3, 0, [0.1, 50.0])
        assert rs.rings[0] is not None and rs.rings[1] is None

    def test_invariant_under_rigid_motion(self, sphere3, rng):
        m = shapes.ellipsoid((1.4, 1.0, 0.8), 2)
        rot = random_rotation(rng)
        moved = m.transformed(rot, offset=(2.0, 1.0, -3.0))
        a = ring_set(m, 12, [0.1, 0.2])
        b = ring_set(moved, 12, [0.1, 0.2])
        for ra, rb in zip(a.rings, b.rings):
            np.testing.assert_allclose(rb.points, ra.points @ rot.T + [2.0, 1.0, -3.0], atol=1e-9)
