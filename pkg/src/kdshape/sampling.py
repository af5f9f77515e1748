"""Blue-noise surface sampling of triangle meshes.

Dart throwing with a uniform-grid neighbour lookup. The rejection radius
starts at ``slack * r_est`` with ``r_est = sqrt(area / (n * pi))`` and shrinks
by ``relax`` every time ``budget * n`` consecutive darts fail, so the output
always has exactly ``n`` points unless the radius falls below
``floor * r_est``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InsufficientSamples, IoError, ParseError
from .pointcloud import PointCloud


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) == 0:
            raise EmptyMesh("mesh has no faces")
        if faces.min() < 0 or faces.max() >= len(verts):
            raise ParseError("face index out of range")
        normals = self.normals
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
            if len(normals) != len(verts):
                raise ParseError("per-vertex normal count differs from vertex count")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "normals", normals)
        if not self.total_area > 0:
            raise EmptyMesh("mesh has zero surface area")

    @property
    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def degenerate_faces(self) -> np.ndarray:
        return self.face_areas <= 0.0


def vertex_normals(vertices, faces) -> np.ndarray:
    """Area-weighted vertex normals (the unnormalized cross product already carries 2*area)."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    fn = np.cross(b - a, c - a)
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)


def _obj_index(token, count, path, lineno):
    try:
        idx = int(token)
    except ValueError:
        raise ParseError(f"bad index {token!r}", path=path, line=lineno) from None
    if idx == 0:
        raise ParseError("OBJ indices are 1-based", path=path, line=lineno)
    idx = idx - 1 if idx > 0 else count + idx
    if not 0 <= idx < count:
        raise ParseError(f"index {token} out of range", path=path, line=lineno)
    return idx


def load_mesh(path, format: str = "obj") -> TriangleMesh:
    """Read an OBJ mesh, fan-triangulating polygons.

    Vertex normals come from ``vn`` records when every vertex gets one through
    the face corners; otherwise area-weighted normals are computed.
    """
    if format != "obj":
        raise ParseError(f"unsupported mesh format {format!r}", path=path)
    verts, vns, faces = [], [], []
    corner_normals = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            key = tokens[0]
            if key == "v":
                if len(tokens) < 4:
                    raise ParseError(f"malformed vertex {line.strip()!r}", path=path, line=lineno)
                try:
                    verts.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError(f"malformed vertex {line.strip()!r}", path=path, line=lineno) from None
            elif key == "vn":
                try:
                    vns.append([float(t) for t in tokens[1:4]])
                except ValueError:
                    raise ParseError(f"malformed normal {line.strip()!r}", path=path, line=lineno) from None
            elif key == "f":
                corners = tokens[1:]
                if len(corners) < 3:
                    raise ParseError("face with fewer than 3 corners", path=path, line=lineno)
                idx = []
                for corner in corners:
                    parts = corner.split("/")
                    vi = _obj_index(parts[0], len(verts), path, lineno)
                    idx.append(vi)
                    if len(parts) == 3 and parts[2]:
                        corner_normals[vi] = _obj_index(parts[2], len(vns), path, lineno)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise EmptyMesh(f"{path}: no faces")
    vertices = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    if vns and len(corner_normals) == len(vertices):
        table = np.asarray(vns, dtype=np.float64)
        normals = table[[corner_normals[v] for v in range(len(vertices))]]
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    else:
        normals = vertex_normals(vertices, faces)
    return TriangleMesh(vertices, faces, normals)


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SamplerConfig:
    slack: float = 0.8
    relax: float = 0.95
    budget: int = 10
    floor: float = 0.5
    batch: int = 4096


@dataclass(frozen=True, eq=False)
class SurfaceSample:
    cloud: PointCloud
    face_index: np.ndarray
    barycentric: np.ndarray
    radius: float
    r_est: float


def estimated_radius(area: float, n_target: int) -> float:
    return math.sqrt(area / (n_target * math.pi))


def sample_surface_detailed(mesh: TriangleMesh, n_target: int, seed: int,
                            config: SamplerConfig = SamplerConfig()) -> SurfaceSample:
    if n_target < 4:
        raise ValueError("n_target must be at least 4")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    live = np.flatnonzero(areas > 0.0)
    cdf = np.cumsum(areas[live])
    total = float(cdf[-1])
    r_est = estimated_radius(total, n_target)
    radius = config.slack * r_est
    floor = config.floor * r_est

    verts = mesh.vertices
    lo = verts.min(axis=0)
    extent = verts.max(axis=0) - lo
    # cells never smaller than the starting radius, so a 3x3x3 neighbourhood suffices
    cell = max(radius, float(extent.max()) / 512.0)
    grid: dict[tuple, list] = {}

    pts = np.empty((n_target, 3))
    face_of = np.empty(n_target, dtype=np.int64)
    bary_of = np.empty((n_target, 3))
    count = 0
    fails = 0
    fail_limit = config.budget * n_target
    r2 = radius * radius

    while count < n_target:
        m = config.batch
        tri = live[np.minimum(np.searchsorted(cdf, rng.random(m) * total, side="right"), len(live) - 1)]
        u = np.sqrt(rng.random(m))
        v = rng.random(m)
        bary = np.column_stack([1.0 - u, u * (1.0 - v), u * v])
        f = mesh.faces[tri]
        cand = (bary[:, :1] * verts[f[:, 0]] + bary[:, 1:2] * verts[f[:, 1]]
                + bary[:, 2:] * verts[f[:, 2]])
        keys = np.floor((cand - lo) / cell).astype(np.int64).tolist()
        cand_list = cand.tolist()
        for k in range(m):
            px, py, pz = cand_list[k]
            gx, gy, gz = keys[k]
            ok = True
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        bucket = grid.get((gx + dx, gy + dy, gz + dz))
                        if bucket is None:
                            continue
                        for qx, qy, qz in bucket:
                            ex, ey, ez = qx - px, qy - py, qz - pz
                            if ex * ex + ey * ey + ez * ez < r2:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                pts[count] = cand[k]
                face_of[count] = tri[k]
                bary_of[count] = bary[k]
                grid.setdefault((gx, gy, gz), []).append((px, py, pz))
                count += 1
                fails = 0
                if count == n_target:
                    break
            else:
                fails += 1
                if fails >= fail_limit:
                    radius *= config.relax
                    fails = 0
                    if radius < floor:
                        raise InsufficientSamples(count, n_target)
                    r2 = radius * radius

    if mesh.normals is not None:
        fn = mesh.normals[mesh.faces[face_of]]
        normals = np.einsum("ij,ijk->ik", bary_of, fn)
        length = np.linalg.norm(normals, axis=1)
        weak = length < 1e-12
        if np.any(weak):
            f = mesh.faces[face_of[weak]]
            a, b, c = (verts[f[:, k]] for k in range(3))
            normals[weak] = np.cross(b - a, c - a)
            length[weak] = np.linalg.norm(normals[weak], axis=1)
        normals /= length[:, None]
        cloud = PointCloud(np.hstack([pts, normals]), ("position", "normal"))
    else:
        cloud = PointCloud(pts, ("position",))
    return SurfaceSample(cloud, face_of, bary_of, radius, r_est)


def sample_surface(mesh: TriangleMesh, n_target: int, seed: int,
                   config: SamplerConfig = SamplerConfig()) -> PointCloud:
    """Exactly ``n_target`` evenly spread points on the mesh surface.

    Carries interpolated unit normals (D=6) when the mesh has vertex normals.
    """
    return sample_surface_detailed(mesh, n_target, seed, config).cloud


def uniform_surface_sample(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """Plain area-weighted random sample; the white-noise reference for blue-noise checks."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    cdf = np.cumsum(areas)
    tri = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), len(areas) - 1)
    u = np.sqrt(rng.random(n))
    v = rng.random(n)
    f = mesh.faces[tri]
    vs = mesh.vertices
    return ((1 - u)[:, None] * vs[f[:, 0]] + (u * (1 - v))[:, None] * vs[f[:, 1]]
            + (u * v)[:, None] * vs[f[:, 2]])


def box_mesh(dims=(1.0, 1.0, 1.0)) -> TriangleMesh:
    """Closed axis-aligned box centered at the origin, 12 outward-facing triangles, no normals."""
    hx, hy, hz = (0.5 * float(d) for d in dims)
    verts = np.array([[x, y, z] for x in (-hx, hx) for y in (-hy, hy) for z in (-hz, hz)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.array(faces))


def merge_meshes(meshes) -> TriangleMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces))
