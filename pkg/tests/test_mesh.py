import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shaperet import shapes
from shaperet.mesh import (MeshError, OffParseError, TriMesh, bbox, estimate_geometry, load_off, parse_off,
                           ring_neighborhoods, vertex_rings, write_off)

from conftest import random_rotation

TRIANGLE_OFF = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


class TestParseOff:
    def test_minimal_file(self):
        m = parse_off(TRIANGLE_OFF)
        assert (m.n_vertices, m.n_faces) == (3, 1)

    def test_tetrahedron_is_closed(self):
        m = parse_off(write_off(shapes.tetrahedron()))
        assert (m.n_vertices, m.n_faces) == (4, 4)
        assert len(m.edge_face_counts) == 6
        assert set(m.edge_face_counts.values()) == {2}

    def test_counts_on_header_line_and_comments(self):
        text = "# leading comment\nOFF 3 1 0\n\n0 0 0 # origin\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n"
        m = parse_off(text.encode())
        assert m.n_faces == 1
        np.testing.assert_array_equal(m.faces, [[0, 1, 2]])

    def test_quad_face_rejected(self):
        text = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
        with pytest.raises(OffParseError, match="non-triangular face") as exc:
            parse_off(text)
        assert exc.value.line == 7

    @pytest.mark.parametrize("text, fragment", [
        ("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "missing OFF header"),
        ("COFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "missing OFF header"),
        ("OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "count mismatch"),
        ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n", "out of range"),
        ("", "missing OFF header"),
    ])
    def test_errors_name_the_problem(self, text, fragment):
        with pytest.raises(OffParseError, match=fragment):
            parse_off(text)

    def test_error_carries_line_number(self):
        with pytest.raises(OffParseError) as exc:
            parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n")
        assert exc.value.line == 6
        assert "line 6" in str(exc.value)

    def test_load_uses_file_stem_as_id(self, tmp_path):
        p = tmp_path / "chair_12.off"
        p.write_text(TRIANGLE_OFF)
        assert load_off(p).id == "chair_12"

    @given(st.integers(0, 10_000))
    def test_round_trip_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        m = shapes.jittered(shapes.icosphere(1), 0.05, rng)
        back = parse_off(write_off(m))
        np.testing.assert_array_equal(back.vertices, m.vertices)
        np.testing.assert_array_equal(back.faces, m.faces)


class TestTriMesh:
    def test_rejects_bad_index(self):
        with pytest.raises(MeshError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])

    def test_rejects_degenerate_face(self):
        with pytest.raises(MeshError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])

    def test_rejects_non_finite(self):
        with pytest.raises(MeshError):
            TriMesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])

    def test_arrays_are_read_only(self, sphere3):
        with pytest.raises(ValueError):
            sphere3.vertices[0, 0] = 1.0

    def test_normals_point_outward_on_sphere(self, sphere3):
        dots = np.einsum("ij,ij->i", sphere3.vertex_normals, sphere3.vertices)
        assert dots.min() > 0.99


class TestBBox:
    def test_unit_cube(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)
        m = TriMesh(corners, np.empty((0, 3)))
        assert bbox(m).diagonal == pytest.approx(np.sqrt(3))

    def test_single_vertex(self):
        assert bbox(TriMesh([[1, 2, 3]], np.empty((0, 3)))).diagonal == 0.0

    def test_3_4_12_box(self):
        m = TriMesh([[0, 0, 0], [3, 4, 12]], np.empty((0, 3)))
        assert bbox(m).diagonal == pytest.approx(13.0)

    def test_empty_mesh_errors(self):
        with pytest.raises(MeshError):
            bbox(TriMesh(np.empty((0, 3)), np.empty((0, 3))))

    @given(st.floats(-100, 100), st.floats(0.1, 10))
    def test_translation_invariant_and_scale_linear(self, shift, scale):
        m = shapes.tetrahedron()
        d = bbox(m).diagonal
        assert bbox(m.translated([shift, -shift, 2 * shift])).diagonal == pytest.approx(d, rel=1e-9)
        assert bbox(m.transformed(np.eye(3), scale=scale)).diagonal == pytest.approx(scale * d, rel=1e-12)


class TestVertexRings:
    def test_tetrahedron_one_ring(self):
        m = shapes.tetrahedron()
        for v in range(4):
            assert vertex_rings(m, v, 1) == set(range(4)) - {v}

    def test_zero_rings_empty(self, sphere3):
        assert vertex_rings(sphere3, 5, 0) == set()

    def test_fan_center(self):
        assert vertex_rings(shapes.fan(6), 0, 1) == {1, 2, 3, 4, 5, 6}

    def test_invalid_vertex(self):
        with pytest.raises(MeshError):
            vertex_rings(shapes.tetrahedron(), 4, 1)

    @given(st.integers(0, 161), st.integers(0, 4))
    def test_nested(self, v, k):
        m = shapes.icosphere(2)
        assert vertex_rings(m, v, k) <= vertex_rings(m, v, k + 1)

    def test_matches_sparse_neighborhoods(self, sphere3):
        reach = ring_neighborhoods(sphere3, 2)
        for v in (0, 17, 300):
            row = set(reach.indices[reach.indptr[v]:reach.indptr[v + 1]].tolist()) - {v}
            assert row == vertex_rings(sphere3, v, 2)


class TestGeometry:
    def test_sphere_radius_two(self, sphere4_r2):
        g = estimate_geometry(sphere4_r2)
        assert np.median(g.mean_curvature) == pytest.approx(0.5, rel=0.05)
        assert np.median(g.gaussian_curvature) == pytest.approx(0.25, rel=0.10)

    def test_flat_grid_has_zero_curvature(self, grid):
        g = estimate_geometry(grid)
        edge = grid.edge_lengths.min()
        assert np.abs(g.kappa1).max() <= 1e-6 / edge
        assert np.abs(g.kappa2).max() <= 1e-6 / edge

    def test_cylinder_sides(self, capsule):
        g = estimate_geometry(capsule)
        side = np.abs(capsule.vertices[:, 2]) < 1.5
        np.testing.assert_allclose(g.kappa1[side], 1.0, rtol=0.1)
        assert np.abs(g.kappa2[side]).max() < 0.1

    def test_ordering_and_unit_normals(self, sphere3_geometry):
        g = sphere3_geometry
        assert np.all(g.kappa1 >= g.kappa2)
        np.testing.assert_allclose(np.linalg.norm(g.normals, axis=1), 1.0, atol=1e-6)

    def test_isolated_vertex_flagged(self):
        m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
        g = estimate_geometry(m)
        assert g.quality[3] == 0.0
        assert g.kappa1[3] == 0.0 and g.kappa2[3] == 0.0

    def test_rotation_equivariant(self, rng):
        m = shapes.ellipsoid((1.5, 1.0, 0.7), 2)
        rot = random_rotation(rng)
        g0 = estimate_geometry(m)
        g1 = estimate_geometry(m.transformed(rot, offset=(1.0, -2.0, 0.5)))
        scale = np.abs(g0.kappa1).max()
        np.testing.assert_allclose(g1.kappa1, g0.kappa1, atol=1e-6 * scale)
        np.testing.assert_allclose(g1.kappa2, g0.kappa2, atol=1e-6 * scale)
        np.testing.assert_allclose(g1.normals, g0.normals @ rot.T, atol=1e-9)

    def test_torus_matches_analytic_range(self):
        g = estimate_geometry(shapes.torus(1.0, 0.4, 60, 30))
        h = g.mean_curvature
        # H runs from (1/r - 1/(R - r)) / 2 on the inside to (1/r + 1/(R + r)) / 2 outside
        assert h.min() == pytest.approx(0.5 * (2.5 - 1 / 0.6), abs=0.05)
        assert h.max() == pytest.approx(0.5 * (2.5 + 1 / 1.4), abs=0.05)
