"""On-disk dataset directories: one text file per shape plus ``manifest.json``."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import DatasetMismatch, EmptyDataset, IoError
from .pointcloud import ShapeDataset, load_points, save_points

MANIFEST = "manifest.json"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path, doc) -> None:
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def save_dataset(dataset: ShapeDataset, directory, fmt: str = "xyz", ordering: str | None = None,
                 meta: dict | None = None) -> Path:
    directory = Path(directory)
    shapes_dir = directory / "shapes"
    try:
        shapes_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {shapes_dir}: {exc}") from exc
    entries = []
    for sid, cloud in zip(dataset.shape_ids, dataset.clouds):
        path = shapes_dir / f"{sid}.{fmt}"
        save_points(cloud, path, fmt)
        entries.append({"id": sid, "file": f"shapes/{path.name}", "sha256": _sha256(path)})
    manifest = {
        "kind": "kdshape-dataset",
        "N": dataset.n_points,
        "D": dataset.attr_dim,
        "schema": list(dataset.attr_schema),
        "ordering": ordering,
        "shapes": entries,
    }
    if meta:
        manifest["meta"] = meta
    write_json(directory / MANIFEST, manifest)
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetMismatch(f"{path}: corrupt manifest ({exc})") from exc


def load_dataset(directory, verify: bool = True) -> ShapeDataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    entries = manifest.get("shapes", [])
    if not entries:
        raise EmptyDataset(f"{directory}: dataset has no shapes")
    clouds = []
    for entry in entries:
        path = directory / entry["file"]
        if verify and entry.get("sha256") and _sha256(path) != entry["sha256"]:
            raise DatasetMismatch(f"{path}: content hash differs from manifest")
        clouds.append(load_points(path))
    ds = ShapeDataset(clouds, [e["id"] for e in entries])
    if ds.n_points != manifest["N"] or ds.attr_dim != manifest["D"]:
        raise DatasetMismatch(f"{directory}: files disagree with manifest N/D")
    return ds


def dataset_ordering(directory) -> str | None:
    return read_manifest(directory).get("ordering")
