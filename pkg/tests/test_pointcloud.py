import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdshape.errors import AttributeMismatch, DatasetMismatch, DegenerateCloud, IoError, ParseError
from kdshape.pointcloud import (
    PointCloud,
    ShapeDataset,
    check_unit_normals,
    is_normalized,
    load_points,
    normalize_cloud,
    save_points,
)


def test_normalize_box_example():
    corners = np.array([[x, y, z] for x in (0, 2) for y in (0, 1) for z in (0, 1)], dtype=float)
    out = normalize_cloud(PointCloud(corners)).xyz
    np.testing.assert_allclose(out.min(axis=0), [-0.5, -0.25, -0.25], atol=1e-15)
    np.testing.assert_allclose(out.max(axis=0), [0.5, 0.25, 0.25], atol=1e-15)


def test_normalize_random_cube_recomputed_bbox(rng):
    cloud = PointCloud(rng.uniform(3, 7, size=(100, 3)))
    out = normalize_cloud(cloud)
    lo, hi = out.xyz.min(axis=0), out.xyz.max(axis=0)
    assert np.all(np.abs((lo + hi) / 2) < 1e-9)
    assert abs(np.max(hi - lo) - 1.0) < 1e-9
    assert is_normalized(out)
    # input untouched
    assert cloud.xyz.min() >= 3


def test_normalize_idempotent(rng):
    once = normalize_cloud(PointCloud(rng.normal(size=(50, 3))))
    twice = normalize_cloud(once)
    np.testing.assert_allclose(twice.points, once.points, atol=1e-15)


def test_normalize_leaves_normals(rng):
    n = rng.normal(size=(20, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    cloud = PointCloud(np.hstack([rng.uniform(-4, 9, (20, 3)), n]), ("position", "normal"))
    out = normalize_cloud(cloud)
    np.testing.assert_array_equal(out.points[:, 3:], n)


def test_normalize_degenerate():
    with pytest.raises(DegenerateCloud):
        normalize_cloud(PointCloud(np.ones((5, 3))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-100, 100, allow_nan=False, width=64)),
       st.permutations([0, 1, 2]))
def test_normalize_axis_permutation_equivariant(pts, perm):
    if np.max(np.ptp(pts, axis=0)) < 1e-6:
        return
    perm = list(perm)
    a = normalize_cloud(PointCloud(pts[:, perm])).xyz
    b = normalize_cloud(PointCloud(pts)).xyz[:, perm]
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_dataset_rejects_mixed_n_and_d(rng):
    a = PointCloud(rng.normal(size=(10, 3)))
    with pytest.raises(DatasetMismatch):
        ShapeDataset([a, PointCloud(rng.normal(size=(11, 3)))])
    n = np.tile([0.0, 0.0, 1.0], (10, 1))
    with pytest.raises(DatasetMismatch):
        ShapeDataset([a, PointCloud(np.hstack([rng.normal(size=(10, 3)), n]), ("position", "normal"))])
    with pytest.raises(DatasetMismatch):
        ShapeDataset([a, a], ["x", "x"])


def test_cloud_rejects_nonfinite():
    with pytest.raises(AttributeMismatch):
        PointCloud(np.array([[0.0, np.nan, 1.0]]))


def test_load_xyz(tmp_path):
    p = tmp_path / "tri.xyz"
    p.write_text("0 0 0\n1 0 0\n0 1 0\n")
    cloud = load_points(p)
    assert cloud.n_points == 3 and cloud.attr_dim == 3
    np.testing.assert_array_equal(cloud.points, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_load_xyz_malformed_line_names_line(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 0\n1 2\n")
    with pytest.raises(ParseError) as info:
        load_points(p)
    assert info.value.line == 2
    assert ":2" in str(info.value)


def test_load_xyz_partial_normals(tmp_path):
    p = tmp_path / "mixed.xyz"
    p.write_text("0 0 0 0 0 1\n1 0 0\n")
    with pytest.raises(AttributeMismatch):
        load_points(p)


def test_load_ply_with_normals(tmp_path):
    p = tmp_path / "n.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
        "property float z\nproperty float nx\nproperty float ny\nproperty float nz\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0 0 0 1\n1 2 3 1 0 0\n3 0 1 1\n"
    )
    cloud = load_points(p)
    assert cloud.attr_dim == 6
    assert cloud.attr_schema == ("position", "normal")
    np.testing.assert_array_equal(cloud.points[1], [1, 2, 3, 1, 0, 0])


def test_load_obj_vertices(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text("# c\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1 2 3\n")
    assert load_points(p, "obj-vertices").n_points == 3


@pytest.mark.parametrize("fmt", ["xyz", "ply"])
@pytest.mark.parametrize("with_normals", [False, True])
def test_round_trip(tmp_path, rng, fmt, with_normals):
    pts = rng.normal(size=(1000, 3)) * 10
    schema = ("position",)
    if with_normals:
        n = rng.normal(size=(1000, 3))
        pts = np.hstack([pts, n / np.linalg.norm(n, axis=1, keepdims=True)])
        schema = ("position", "normal")
    cloud = PointCloud(pts, schema)
    path = tmp_path / f"c.{fmt}"
    save_points(cloud, path)
    back = load_points(path)
    assert back.attr_schema == schema
    assert np.max(np.abs(back.points - cloud.points)) < 1e-8


def test_ply_declares_normal_properties(tmp_path):
    cloud = PointCloud(np.array([[0, 0, 0, 0, 0, 1.0]]), ("position", "normal"))
    save_points(cloud, tmp_path / "c.ply")
    text = (tmp_path / "c.ply").read_text()
    for prop in ("nx", "ny", "nz"):
        assert f"property double {prop}" in text


def test_save_unwritable_directory(tmp_path):
    cloud = PointCloud(np.zeros((2, 3)) + [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(IoError):
        save_points(cloud, tmp_path / "missing" / "dir" / "c.xyz")


def test_check_unit_normals():
    good = PointCloud(np.array([[0, 0, 0, 0, 0, 1.0]]), ("position", "normal"))
    check_unit_normals(good)
    bad = PointCloud(np.array([[0, 0, 0, 0, 0, 1.1]]), ("position", "normal"))
    with pytest.raises(AttributeMismatch):
        check_unit_normals(bad)
