import math

import numpy as np
import pytest

from bsrd.mesh import (
    MAX_REFINEMENT_LEVEL,
    BulkSurfaceMesh,
    MeshError,
    boundary_faces,
    extract_surface,
    generate_ball_mesh,
    load_mesh_text,
    mesh_stats,
    save_mesh_text,
    tet_volumes,
    validate_ball_mesh,
)

BALL_VOLUME = 4.0 * math.pi / 3.0
SPHERE_AREA = 4.0 * math.pi


def regular_tet():
    verts = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, math.sqrt(3.0) / 2.0, 0.0],
        [0.5, math.sqrt(3.0) / 6.0, math.sqrt(6.0) / 3.0],
    ])
    return verts, np.array([[0, 1, 2, 3]])


class TestSeed:
    def test_seed_invariants(self):
        mesh = generate_ball_mesh(0)
        validate_ball_mesh(mesh)
        stats = mesh_stats(mesh)
        assert stats.n_surface_tris == 20
        assert stats.n_tets == 20
        assert stats.n_vertices == 13

    def test_surface_euler_characteristic(self):
        mesh = generate_ball_mesh(0)
        # validate_ball_mesh already asserts V - E + F = 2; recompute here.
        tris = mesh.surface_tris
        edges = set()
        for a, b, c in tris:
            for i, j in ((a, b), (b, c), (c, a)):
                edges.add((min(i, j), max(i, j)))
        euler = mesh.n_surface_vertices - len(edges) + len(tris)
        assert euler == 2


class TestRefinement:
    @pytest.mark.parametrize("level", [1, 2, 3])
    def test_surface_count_and_invariants(self, level):
        mesh = generate_ball_mesh(level)
        validate_ball_mesh(mesh)
        assert mesh.surface_tris.shape[0] == 20 * 4 ** level
        assert mesh.tets.shape[0] == 20 * 8 ** level

    def test_h_max_decreases(self):
        h = [mesh_stats(generate_ball_mesh(level)).h_max for level in range(3)]
        assert h[0] > h[1] > h[2]

    def test_volume_and_area_convergence(self):
        stats = mesh_stats(generate_ball_mesh(3))
        assert abs(stats.volume - BALL_VOLUME) / BALL_VOLUME < 0.02
        assert abs(stats.area - SPHERE_AREA) / SPHERE_AREA < 0.02
        coarse = mesh_stats(generate_ball_mesh(1))
        # Deficit shrinks roughly like h^2 under refinement.
        assert (BALL_VOLUME - stats.volume) < (BALL_VOLUME - coarse.volume) / 8

    def test_guard_levels(self):
        with pytest.raises(ValueError, match="guard"):
            generate_ball_mesh(MAX_REFINEMENT_LEVEL + 1)
        with pytest.raises(ValueError, match=">= 0"):
            generate_ball_mesh(-1)


class TestBoundaryFaces:
    def test_single_tet(self):
        _, tets = regular_tet()
        assert boundary_faces(tets).shape == (4, 3)

    def test_two_tets_share_face(self):
        verts = np.array([
            [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0], [1.0, 1.0, 1.0],
        ])
        tets = np.array([[0, 1, 2, 3], [1, 2, 3, 4]])
        assert boundary_faces(tets).shape == (6, 3)

    def test_nonmanifold_rejected(self):
        verts = np.array([
            [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [1.0, 1.0, 1.0],
        ])
        # Face (0, 1, 2) appears in three tets.
        tets = np.array([[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]])
        with pytest.raises(MeshError, match="non-manifold"):
            boundary_faces(tets)


class TestExtractSurface:
    def test_matches_stored_triangulation(self):
        mesh = generate_ball_mesh(2)
        tris = extract_surface(mesh)
        assert np.array_equal(tris, mesh.surface_tris)

    def test_detects_tampered_surface(self):
        mesh = generate_ball_mesh(1)
        tampered = BulkSurfaceMesh(
            vertices=mesh.vertices, tets=mesh.tets,
            surface_tris=mesh.surface_tris[:-1],
            surface_vertex_ids=mesh.surface_vertex_ids,
            bulk_to_surface=mesh.bulk_to_surface)
        with pytest.raises(MeshError, match="does not match"):
            extract_surface(tampered)


class TestMeshStats:
    def test_regular_tet_volume(self):
        verts, tets = regular_tet()
        mesh = BulkSurfaceMesh.from_tets(verts, tets)
        stats = mesh_stats(mesh)
        assert stats.volume == pytest.approx(math.sqrt(2.0) / 12.0, rel=1e-12)
        assert stats.h_min == pytest.approx(1.0, rel=1e-12)
        assert stats.h_max == pytest.approx(1.0, rel=1e-12)

    def test_seed_counts(self):
        stats = mesh_stats(generate_ball_mesh(0))
        assert (stats.n_vertices, stats.n_tets, stats.n_surface_tris,
                stats.n_surface_vertices) == (13, 20, 20, 12)


class TestOrientationAndVolumes:
    def test_all_volumes_positive(self):
        mesh = generate_ball_mesh(2)
        assert np.all(tet_volumes(mesh.vertices, mesh.tets) > 0)

    def test_surface_normals_outward(self):
        mesh = generate_ball_mesh(1)
        p = mesh.vertices[mesh.surface_tris]
        normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        assert np.all(np.einsum("ij,ij->i", normals, p.mean(axis=1)) > 0)

    def test_surface_vertices_on_sphere(self):
        mesh = generate_ball_mesh(3)
        norms = np.linalg.norm(mesh.surface_coords(), axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-12

    def test_bulk_to_surface_bijection(self):
        mesh = generate_ball_mesh(2)
        ids = mesh.surface_vertex_ids
        assert np.array_equal(mesh.bulk_to_surface[ids],
                              np.arange(len(ids)))
        assert np.array_equal(np.sort(ids), ids)


class TestTextIO:
    def test_roundtrip(self, tmp_path):
        mesh = generate_ball_mesh(2)
        path = tmp_path / "ball.txt"
        save_mesh_text(mesh, path)
        loaded = load_mesh_text(path)
        assert np.array_equal(loaded.tets, mesh.tets)
        assert np.array_equal(loaded.vertices, mesh.vertices)
        assert np.array_equal(loaded.surface_tris, mesh.surface_tris)

    def test_truncated_file_rejected(self, tmp_path):
        mesh = generate_ball_mesh(0)
        path = tmp_path / "ball.txt"
        save_mesh_text(mesh, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:5]))
        with pytest.raises(MeshError):
            load_mesh_text(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nodes 3\n0 0 0\n")
        with pytest.raises(MeshError, match="vertices"):
            load_mesh_text(path)

    def test_off_sphere_mesh_rejected(self, tmp_path):
        mesh = generate_ball_mesh(0)
        verts = mesh.vertices.copy()
        verts[0] *= 1.5   # push one boundary vertex off the unit sphere
        path = tmp_path / "off.txt"
        save_mesh_text(BulkSurfaceMesh.from_tets(verts, mesh.tets), path)
        with pytest.raises(MeshError, match="sphere"):
            load_mesh_text(path)
