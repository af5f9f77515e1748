"""Linear shape basis: vectorization, PCA fit, projection, reconstruction error."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import container
from .errors import ConvergenceFailure, DimensionMismatch, InvalidBasisSize
from .pointcloud import PointCloud, ShapeDataset, schema_width

MAGIC = b"KDSB"


def vectorize(cloud: PointCloud) -> np.ndarray:
    """Point-major flattening: entries D*i .. D*i+D-1 hold point i."""
    return cloud.points.reshape(-1).copy()


def devectorize(v, n_points: int, attr_dim: int, schema=("position",)) -> PointCloud:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != n_points * attr_dim:
        raise DimensionMismatch(f"vector of size {v.size} cannot hold {n_points} x {attr_dim}")
    if schema_width(schema) != attr_dim:
        raise DimensionMismatch(f"schema {list(schema)} does not have width {attr_dim}")
    return PointCloud(v.reshape(n_points, attr_dim), tuple(schema))


@dataclass(frozen=True, eq=False)
class ShapeMatrix:
    """Column-stacked vectorized shapes, shape (D*N, S)."""

    data: np.ndarray
    n_points: int
    attr_dim: int
    attr_schema: tuple = ("position",)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != self.n_points * self.attr_dim:
            raise DimensionMismatch(
                f"matrix shape {data.shape} inconsistent with N={self.n_points}, D={self.attr_dim}"
            )
        if not np.all(np.isfinite(data)):
            raise DimensionMismatch("shape matrix has non-finite entries")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "attr_schema", tuple(self.attr_schema))

    @property
    def n_shapes(self) -> int:
        return self.data.shape[1]

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_dataset(cls, dataset: ShapeDataset) -> "ShapeMatrix":
        data = np.stack([vectorize(c) for c in dataset.clouds], axis=1)
        return cls(data, dataset.n_points, dataset.attr_dim, dataset.attr_schema)

    @classmethod
    def from_rows(cls, rows, n_points, attr_dim, schema=("position",)) -> "ShapeMatrix":
        """Build from an (S, D*N) array of row vectors."""
        return cls(np.asarray(rows, dtype=np.float64).T, n_points, attr_dim, schema)

    def column(self, s: int) -> np.ndarray:
        return self.data[:, s]


@dataclass(frozen=True, eq=False)
class PcaBasis:
    mean: np.ndarray
    components: np.ndarray  # (B, D*N), orthonormal rows
    singular_values: np.ndarray
    n_points: int
    attr_dim: int
    attr_schema: tuple = ("position",)
    n_shapes: int = 0

    @property
    def basis_size(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector of size {v.shape[-1]} does not match basis dimension {self.dim}")
        return v

    def project(self, v) -> np.ndarray:
        """Coefficients U (v - mu); accepts a single vector or an (M, D*N) stack."""
        v = self._check(v)
        return (v - self.mean) @ self.components.T

    def reconstruct(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=np.float64)
        if c.shape[-1] != self.basis_size:
            raise DimensionMismatch(f"expected {self.basis_size} coefficients, got {c.shape[-1]}")
        if c.ndim == 1:
            return c @ self.components + self.mean
        # row by row: a batched matmul may round differently depending on batch size
        out = np.empty(c.shape[:-1] + (self.dim,))
        for idx in np.ndindex(c.shape[:-1]):
            out[idx] = c[idx] @ self.components + self.mean
        return out

    def reconstruction_error(self, v):
        """Squared L2 distance between v and its reconstruction from the basis."""
        v = self._check(v)
        w = v - self.mean
        r = (w @ self.components.T) @ self.components - w
        return np.sum(r * r, axis=-1)

    def to_cloud(self, v) -> PointCloud:
        return devectorize(v, self.n_points, self.attr_dim, self.attr_schema)

    def truncated(self, b: int) -> "PcaBasis":
        return PcaBasis(self.mean, self.components[:b], self.singular_values[:b],
                        self.n_points, self.attr_dim, self.attr_schema, self.n_shapes)

    # persistence -----------------------------------------------------------

    def header(self) -> dict:
        return {
            "kind": "pca-basis",
            "N": self.n_points,
            "D": self.attr_dim,
            "B": self.basis_size,
            "S": self.n_shapes,
            "schema": list(self.attr_schema),
        }

    def to_bytes(self) -> bytes:
        return container.encode(MAGIC, self.header(), {
            "mean": self.mean, "components": self.components, "singular_values": self.singular_values,
        })

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PcaBasis":
        header, arrays = container.decode(blob, MAGIC)
        return cls(arrays["mean"], arrays["components"].reshape(header["B"], -1),
                   arrays["singular_values"].reshape(-1), header["N"], header["D"],
                   tuple(header["schema"]), header["S"])

    def digest(self) -> str:
        return container.digest(self.to_bytes())

    def save(self, path) -> None:
        container.write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "PcaBasis":
        return cls.from_bytes(container.read(path))

    def to_json(self) -> str:
        doc = self.header()
        doc.update(mean=self.mean.tolist(), components=self.components.tolist(),
                   singular_values=self.singular_values.tolist())
        return json.dumps(doc)


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def fit_pca(matrix: ShapeMatrix, basis_size: int) -> PcaBasis:
    """Top-``basis_size`` principal directions of the column-centered shape matrix.

    Each basis row is sign-normalized so that its largest-magnitude entry is
    positive, which makes the fit deterministic.
    """
    dim, n_shapes = matrix.data.shape
    if n_shapes < 2:
        raise InvalidBasisSize("PCA needs at least two shapes")
    if not 0 <= basis_size <= min(dim, n_shapes):
        raise InvalidBasisSize(f"B={basis_size} outside [0, min(D*N={dim}, S={n_shapes})]")
    mean = matrix.data.mean(axis=1)
    centered = matrix.data - mean[:, None]
    try:
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    components = _fix_signs(np.ascontiguousarray(u[:, :basis_size].T))
    return PcaBasis(mean, components, s[:basis_size].copy(), matrix.n_points,
                    matrix.attr_dim, matrix.attr_schema, n_shapes)


def project(basis: PcaBasis, v) -> np.ndarray:
    return basis.project(v)


def reconstruct(basis: PcaBasis, coeffs) -> np.ndarray:
    return basis.reconstruct(coeffs)


def reconstruction_error(basis: PcaBasis, v):
    return basis.reconstruction_error(v)


def total_error(basis: PcaBasis, matrix: ShapeMatrix) -> float:
    return float(np.sum(basis.reconstruction_error(matrix.data.T)))


def coefficients(basis: PcaBasis, matrix: ShapeMatrix) -> np.ndarray:
    """(S, B) coefficient table of every training shape."""
    return basis.project(matrix.data.T)


def spectrum_energy(singular_values) -> np.ndarray:
    """Cumulative fraction of squared singular value energy."""
    e = np.asarray(singular_values, dtype=np.float64) ** 2
    total = e.sum()
    return np.cumsum(e) / total if total > 0 else np.ones_like(e)


def singular_spectrum(matrix: ShapeMatrix) -> np.ndarray:
    """All min(D*N, S) singular values of the centered matrix, non-increasing."""
    centered = matrix.data - matrix.data.mean(axis=1, keepdims=True)
    return np.linalg.svd(centered, compute_uv=False)
