import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from kdshape.errors import EmptyMesh, InsufficientSamples
from kdshape.sampling import (
    SamplerConfig,
    TriangleMesh,
    box_mesh,
    load_mesh,
    sample_surface,
    sample_surface_detailed,
    uniform_surface_sample,
)

SQUARE = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float),
                      np.array([[0, 1, 2], [0, 2, 3]]))


def brute_min_distance(xyz):
    best = np.inf
    for a in range(len(xyz)):
        for b in range(a + 1, len(xyz)):
            best = min(best, math.dist(xyz[a], xyz[b]))
    return best


def test_unit_square_count_plane_and_spacing():
    cloud = sample_surface(SQUARE, 100, seed=7)
    assert cloud.n_points == 100
    assert np.all(cloud.xyz[:, 2] == 0.0)
    r_est = math.sqrt(1.0 / (100 * math.pi))
    assert round(0.5 * r_est, 4) == 0.0282
    assert brute_min_distance(cloud.xyz) >= 0.5 * r_est


def test_points_are_barycentric_combinations():
    mesh = box_mesh((1.0, 2.5, 0.7))
    s = sample_surface_detailed(mesh, 300, seed=3)
    f = mesh.faces[s.face_index]
    rebuilt = np.einsum("ij,ijk->ik", s.barycentric, mesh.vertices[f])
    assert np.max(np.abs(rebuilt - s.cloud.xyz)) < 1e-9
    assert np.all(s.barycentric >= 0) and np.allclose(s.barycentric.sum(axis=1), 1.0)
    a, b, c = (mesh.vertices[f[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    plane_dist = np.abs(np.einsum("ij,ij->i", s.cloud.xyz - a, n))
    assert plane_dist.max() < 1e-9


def test_thousand_points_exact_count():
    mesh = box_mesh((1.0, 0.4, 0.8))
    cloud = sample_surface(mesh, 1000, seed=0)
    assert cloud.n_points == 1000
    r_est = math.sqrt(mesh.total_area / (1000 * math.pi))
    assert pdist(cloud.xyz).min() >= 0.5 * r_est


def test_deterministic_per_seed():
    mesh = box_mesh((1, 2, 3))
    assert sample_surface(mesh, 200, seed=11) == sample_surface(mesh, 200, seed=11)
    assert sample_surface(mesh, 200, seed=11) != sample_surface(mesh, 200, seed=12)


def test_blue_noise_beats_white_noise():
    mesh = box_mesh((1.0, 1.0, 1.0))
    wins = sum(
        pdist(sample_surface(mesh, 256, seed=s).xyz).min() > pdist(uniform_surface_sample(mesh, 256, seed=s)).min()
        for s in range(50)
    )
    assert wins == 50


def test_normals_interpolated_and_unit(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    cloud = sample_surface(load_mesh(p), 30, seed=1)
    assert cloud.attr_schema == ("position", "normal")
    np.testing.assert_allclose(cloud.points[:, 3:], np.tile([0, 0, 1.0], (30, 1)), atol=1e-12)


def test_insufficient_samples_reports_count():
    cfg = SamplerConfig(budget=0, floor=0.79)
    with pytest.raises(InsufficientSamples) as info:
        sample_surface(SQUARE, 500, seed=0, config=cfg)
    assert 0 < info.value.achieved < 500


def test_load_cube_quads(tmp_path):
    lines = [f"v {x} {y} {z}" for x in (0, 1) for y in (0, 1) for z in (0, 1)]
    lines += ["f 1 2 4 3", "f 5 7 8 6", "f 1 5 6 2", "f 3 4 8 7", "f 1 3 7 5", "f 2 6 8 4"]
    p = tmp_path / "cube.obj"
    p.write_text("\n".join(lines) + "\n")
    mesh = load_mesh(p)
    assert len(mesh.faces) == 12
    assert mesh.total_area == pytest.approx(6.0)
    np.testing.assert_allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)


def test_pentagon_fan(tmp_path):
    p = tmp_path / "pent.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1.5 1 0\nv 0.5 2 0\nv -0.5 1 0\nf 1 2 3 4 5\n")
    mesh = load_mesh(p)
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3], [0, 3, 4]])


def test_mesh_without_faces(tmp_path):
    p = tmp_path / "pts.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(EmptyMesh):
        load_mesh(p)


def test_degenerate_faces_are_skipped():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float)
    mesh = TriangleMesh(verts, np.array([[0, 1, 2], [0, 1, 3]]))
    s = sample_surface_detailed(mesh, 20, seed=0)
    assert np.all(s.face_index == 0)
