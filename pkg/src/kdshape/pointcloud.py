"""Point cloud and dataset types, bounding-box normalization, text I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    AttributeMismatch,
    DatasetMismatch,
    DegenerateCloud,
    IoError,
    ParseError,
)

# width of each named attribute block; unknown names are scalar channels
ATTR_WIDTHS = {"position": 3, "normal": 3}


def schema_width(schema: Sequence[str]) -> int:
    return sum(ATTR_WIDTHS.get(name, 1) for name in schema)


def attr_slice(schema: Sequence[str], name: str) -> slice:
    """Column range of attribute ``name`` inside a point record."""
    start = 0
    for entry in schema:
        width = ATTR_WIDTHS.get(entry, 1)
        if entry == name:
            return slice(start, start + width)
        start += width
    raise KeyError(name)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of N points with D attributes each.

    The first three columns are always x, y, z. ``points`` is stored as a
    read-only float64 array of shape (N, D).
    """

    points: np.ndarray
    attr_schema: tuple = ("position",)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise AttributeMismatch(f"points must be a non-empty (N, D) array, got shape {pts.shape}")
        schema = tuple(self.attr_schema)
        if not schema or schema[0] != "position":
            raise AttributeMismatch("attr_schema must start with 'position'")
        if schema_width(schema) != pts.shape[1]:
            raise AttributeMismatch(
                f"schema {list(schema)} needs D={schema_width(schema)}, points have D={pts.shape[1]}"
            )
        if not np.all(np.isfinite(pts)):
            raise AttributeMismatch("point cloud contains non-finite entries")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "attr_schema", schema)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.points.shape[1]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    def has(self, name: str) -> bool:
        return name in self.attr_schema

    def permuted(self, order) -> "PointCloud":
        return PointCloud(self.points[np.asarray(order)], self.attr_schema)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.attr_schema)

    def __len__(self):
        return self.n_points

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.attr_schema == other.attr_schema and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"PointCloud(n_points={self.n_points}, attr_schema={list(self.attr_schema)})"


@dataclass(frozen=True)
class ShapeDataset:
    """S clouds sharing N, D and schema, each with a unique identifier."""

    clouds: tuple
    shape_ids: tuple = field(default=None)

    def __post_init__(self):
        clouds = tuple(self.clouds)
        if self.shape_ids is None:
            ids = tuple(f"shape_{s:05d}" for s in range(len(clouds)))
        else:
            ids = tuple(str(s) for s in self.shape_ids)
        if len(ids) != len(clouds):
            raise DatasetMismatch(f"{len(clouds)} clouds but {len(ids)} shape ids")
        if len(set(ids)) != len(ids):
            raise DatasetMismatch("shape ids must be unique")
        if clouds:
            first = clouds[0]
            for sid, cloud in zip(ids, clouds):
                if cloud.n_points != first.n_points:
                    raise DatasetMismatch(
                        f"{sid}: N={cloud.n_points} differs from N={first.n_points}"
                    )
                if cloud.attr_schema != first.attr_schema:
                    raise DatasetMismatch(
                        f"{sid}: schema {list(cloud.attr_schema)} differs from {list(first.attr_schema)}"
                    )
        object.__setattr__(self, "clouds", clouds)
        object.__setattr__(self, "shape_ids", ids)

    def __len__(self):
        return len(self.clouds)

    def __iter__(self):
        return iter(self.clouds)

    def __getitem__(self, idx):
        return self.clouds[idx]

    @property
    def n_shapes(self) -> int:
        return len(self.clouds)

    @property
    def n_points(self) -> int:
        return self.clouds[0].n_points

    @property
    def attr_dim(self) -> int:
        return self.clouds[0].attr_dim

    @property
    def attr_schema(self) -> tuple:
        return self.clouds[0].attr_schema

    def replace_clouds(self, clouds) -> "ShapeDataset":
        return ShapeDataset(tuple(clouds), self.shape_ids)


def normalize_cloud(cloud: PointCloud) -> PointCloud:
    """Center the xyz bounding box at the origin and scale its longest side to 1.

    Only the position columns move; normals and other attributes are copied
    as-is since a translation plus uniform scale leaves directions unchanged.
    """
    xyz = cloud.xyz
    lo = xyz.min(axis=0)
    hi = xyz.max(axis=0)
    extent = float(np.max(hi - lo))
    if not extent > 0.0:
        raise DegenerateCloud("all points coincide; bounding box has zero extent")
    center = 0.5 * (lo + hi)
    pts = np.array(cloud.points)
    pts[:, :3] = (xyz - center) / extent
    return PointCloud(pts, cloud.attr_schema)


# ---------------------------------------------------------------------------
# text formats


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt == "obj-vertices":
            fmt = "obj"
        return fmt
    ext = Path(path).suffix.lower().lstrip(".")
    if ext in ("xyz", "txt", "pts"):
        return "xyz"
    if ext in ("ply", "obj"):
        return ext
    raise ParseError(f"cannot infer point format from extension '{ext}'", path=path)


def _parse_floats(tokens, path, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"non-numeric value in {' '.join(tokens)!r}", path=path, line=lineno) from None
    if not all(np.isfinite(vals)):
        raise ParseError("non-finite coordinate", path=path, line=lineno)
    return vals


def _rows_to_cloud(rows, path):
    widths = {len(r) for r in rows}
    if not rows:
        raise ParseError("file contains no points", path=path)
    if widths == {3}:
        return PointCloud(np.asarray(rows), ("position",))
    if widths == {6}:
        return PointCloud(np.asarray(rows), ("position", "normal"))
    raise AttributeMismatch(f"{path}: normals present for only some points")


def _load_xyz(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            tokens = text.split()
            if len(tokens) not in (3, 6):
                raise ParseError(
                    f"expected 3 or 6 values, got {len(tokens)}: {text!r}", path=path, line=lineno
                )
            rows.append(_parse_floats(tokens, path, lineno))
    return _rows_to_cloud(rows, path)


def _load_obj_vertices(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0] != "v":
                continue
            # "v x y z [w]"; a fourth value is a homogeneous weight, not a normal
            if len(tokens) not in (4, 5):
                raise ParseError(f"malformed vertex line {line.strip()!r}", path=path, line=lineno)
            rows.append(_parse_floats(tokens[1:4], path, lineno))
    return _rows_to_cloud(rows, path)


def read_ply_header(fh, path):
    """Parse an ASCII PLY header; returns ({element: (count, [props])}, order, lines read)."""
    first = fh.readline()
    if first.strip() != "ply":
        raise ParseError("missing 'ply' magic", path=path, line=1)
    lineno = 1
    elements = {}
    order = []
    current = None
    while True:
        line = fh.readline()
        lineno += 1
        if not line:
            raise ParseError("unterminated header", path=path, line=lineno)
        tokens = line.split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", path=path, line=lineno)
        elif key in ("comment", "obj_info"):
            continue
        elif key == "element":
            if len(tokens) != 3:
                raise ParseError(f"bad element line {line.strip()!r}", path=path, line=lineno)
            try:
                count = int(tokens[2])
            except ValueError:
                raise ParseError(f"bad element count {tokens[2]!r}", path=path, line=lineno) from None
            current = tokens[1]
            elements[current] = (count, [])
            order.append(current)
        elif key == "property":
            if current is None:
                raise ParseError("property before any element", path=path, line=lineno)
            if tokens[1] == "list":
                elements[current][1].append(("list", tokens[-1]))
            else:
                elements[current][1].append((tokens[1], tokens[-1]))
        elif key == "end_header":
            return elements, order, lineno
        else:
            raise ParseError(f"unknown header keyword {key!r}", path=path, line=lineno)


def _load_ply(path):
    with open(path, "r", encoding="utf-8") as fh:
        elements, order, lineno = read_ply_header(fh, path)
        if "vertex" not in elements:
            raise ParseError("no vertex element", path=path)
        rows = None
        for name in order:
            count, props = elements[name]
            if name != "vertex":
                for _ in range(count):
                    fh.readline()
                    lineno += 1
                continue
            names = [p[1] for p in props]
            for axis in ("x", "y", "z"):
                if axis not in names:
                    raise ParseError(f"vertex element lacks property {axis}", path=path)
            cols = [names.index(a) for a in ("x", "y", "z")]
            normal_names = [n for n in ("nx", "ny", "nz") if n in names]
            if normal_names and len(normal_names) != 3:
                raise AttributeMismatch(f"{path}: partial normal properties {normal_names}")
            if normal_names:
                cols += [names.index(a) for a in ("nx", "ny", "nz")]
            rows = []
            for _ in range(count):
                line = fh.readline()
                lineno += 1
                tokens = line.split()
                if len(tokens) != len(names):
                    raise ParseError(
                        f"expected {len(names)} vertex values, got {len(tokens)}", path=path, line=lineno
                    )
                vals = _parse_floats(tokens, path, lineno)
                rows.append([vals[c] for c in cols])
            break
    return _rows_to_cloud(rows, path)


def load_points(path, format: str | None = None) -> PointCloud:
    """Read a cloud from an XYZ, ASCII PLY or OBJ (vertices only) file, keeping file order."""
    fmt = _infer_format(path, format)
    try:
        if fmt == "xyz":
            return _load_xyz(path)
        if fmt == "ply":
            return _load_ply(path)
        if fmt == "obj":
            return _load_obj_vertices(path)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    raise ParseError(f"unsupported point format {fmt!r}", path=path)


def _fmt(v):
    return format(float(v), ".17g")


def save_points(cloud: PointCloud, path, format: str | None = None, comments: Sequence[str] = ()) -> None:
    fmt = _infer_format(path, format)
    if fmt not in ("xyz", "ply"):
        raise ParseError(f"cannot write point format {fmt!r}", path=path)
    pts = cloud.points
    if fmt == "xyz" and cloud.attr_schema not in (("position",), ("position", "normal")):
        raise AttributeMismatch("XYZ holds only positions and optional normals")
    lines = []
    if fmt == "ply":
        lines += ["ply", "format ascii 1.0"]
        lines += [f"comment {c}" for c in comments]
        lines.append(f"element vertex {cloud.n_points}")
        names = ["x", "y", "z"]
        for entry in cloud.attr_schema[1:]:
            if entry == "normal":
                names += ["nx", "ny", "nz"]
            else:
                names.append(entry)
        lines += [f"property double {n}" for n in names]
        lines.append("end_header")
    lines += [" ".join(_fmt(v) for v in row) for row in pts]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def stack_points(clouds: Sequence[PointCloud]) -> np.ndarray:
    """(S, N, D) array view of a list of clouds."""
    return np.stack([c.points for c in clouds])


def is_normalized(cloud: PointCloud, tol: float = 1e-9) -> bool:
    xyz = cloud.xyz
    lo, hi = xyz.min(axis=0), xyz.max(axis=0)
    return bool(np.all(np.abs(0.5 * (lo + hi)) <= tol) and abs(np.max(hi - lo) - 1.0) <= tol)


__all__ = [
    "PointCloud",
    "ShapeDataset",
    "normalize_cloud",
    "load_points",
    "save_points",
    "schema_width",
    "attr_slice",
    "stack_points",
    "is_normalized",
    "check_unit_normals",
]


def check_unit_normals(cloud: PointCloud, tol: float = 1e-6) -> None:
    """Raise AttributeMismatch unless every normal has unit length within ``tol``."""
    if not cloud.has("normal"):
        return
    normals = cloud.points[:, attr_slice(cloud.attr_schema, "normal")]
    err = np.abs(np.linalg.norm(normals, axis=1) - 1.0)
    if np.any(err > tol):
        bad = int(np.argmax(err))
        raise AttributeMismatch(f"normal of point {bad} has length {1.0 - err[bad]:.9g}, not 1")
