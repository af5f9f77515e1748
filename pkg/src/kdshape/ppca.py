"""Probabilistic PCA baseline, fit in closed form.

With sample-covariance eigenvalues ``lam`` (divisor S) and principal
directions ``u``::

    sigma2 = mean(lam[B:])            over all D*N - B discarded eigenvalues
    W      = u[:, :B] * sqrt(max(lam[:B] - sigma2, 0))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .basis import ShapeMatrix, _fix_signs
from .errors import InvalidBasisSize

MAGIC = b"KDSP"
SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class PpcaModel:
    W: np.ndarray  # (D*N, B)
    mean: np.ndarray
    sigma2: float
    n_points: int = 0
    attr_dim: int = 0
    attr_schema: tuple = ("position",)

    @property
    def basis_size(self) -> int:
        return self.W.shape[1]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def covariance(self) -> np.ndarray:
        return self.W @ self.W.T + self.sigma2 * np.eye(self.dim)

    def to_bytes(self) -> bytes:
        header = {"kind": "ppca", "N": self.n_points, "D": self.attr_dim, "B": self.basis_size,
                  "schema": list(self.attr_schema)}
        return container.encode(MAGIC, header, {"W": self.W, "mean": self.mean,
                                                "sigma2": np.array([self.sigma2])})

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PpcaModel":
        header, arrays = container.decode(blob, MAGIC)
        return cls(arrays["W"].reshape(-1, header["B"]), arrays["mean"], float(arrays["sigma2"][0]),
                   header["N"], header["D"], tuple(header["schema"]))

    def save(self, path) -> None:
        container.write(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "PpcaModel":
        return cls.from_bytes(container.read(path))


def fit_ppca(matrix: ShapeMatrix, basis_size: int) -> PpcaModel:
    dim, n_shapes = matrix.data.shape
    if n_shapes < 2:
        raise InvalidBasisSize("PPCA needs at least two shapes")
    if not 1 <= basis_size < min(dim, n_shapes):
        raise InvalidBasisSize(f"B={basis_size} must satisfy 1 <= B < min(D*N={dim}, S={n_shapes})")
    mean = matrix.data.mean(axis=1)
    centered = matrix.data - mean[:, None]
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    lam = s ** 2 / n_shapes
    # eigenvalues beyond min(D*N, S) are exactly zero and still count in the mean
    sigma2 = max(float(lam[basis_size:].sum()) / (dim - basis_size), SIGMA2_FLOOR)
    directions = _fix_signs(u[:, :basis_size].T).T
    W = directions * np.sqrt(np.maximum(lam[:basis_size] - sigma2, 0.0))
    return PpcaModel(W, mean, sigma2, matrix.n_points, matrix.attr_dim, matrix.attr_schema)


def sample_ppca(model: PpcaModel, count: int, seed) -> np.ndarray:
    """``count`` draws of W x + mu + eps as rows of a (count, D*N) array."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((count, model.basis_size))
    eps = rng.standard_normal((count, model.dim)) * np.sqrt(model.sigma2)
    return x @ model.W.T + model.mean + eps
