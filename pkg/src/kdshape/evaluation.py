"""Bidirectional nearest-neighbour distance between sets of vectorized shapes."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptySet

REPORT_COLUMNS = ("model", "basis_size", "distance", "term_T_to_S", "term_S_to_T", "n_samples", "seed")


@dataclass(frozen=True, eq=False)
class ShapeSet:
    shapes: np.ndarray  # (count, D*N)
    label: str = ""

    def __post_init__(self):
        arr = np.asarray(self.shapes, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or len(arr) == 0:
            raise EmptySet(f"shape set {self.label!r} is empty")
        object.__setattr__(self, "shapes", arr)

    def __len__(self):
        return len(self.shapes)

    @property
    def dim(self):
        return self.shapes.shape[1]


def _as_set(x, label=""):
    return x if isinstance(x, ShapeSet) else ShapeSet(x, label)


def _row_minima(a, b, chunk=512):
    # exact differences per pair (no |a|^2 + |b|^2 - 2ab expansion)
    out_a = np.full(len(a), np.inf)
    out_b = np.full(len(b), np.inf)
    for start in range(0, len(a), chunk):
        d = cdist(a[start:start + chunk], b)
        out_a[start:start + chunk] = d.min(axis=1)
        np.minimum(out_b, d.min(axis=0), out=out_b)
    return out_a, out_b


def directed_terms(training, generated):
    """(mean over T of nearest S distance, mean over S of nearest T distance)."""
    t = _as_set(training, "training")
    s = _as_set(generated, "generated")
    if t.dim != s.dim:
        raise DimensionMismatch(f"shape dimension {t.dim} vs {s.dim}")
    t_min, s_min = _row_minima(t.shapes, s.shapes)
    return float(np.mean(t_min)), float(np.mean(s_min))


def set_distance(training, generated) -> float:
    a, b = directed_terms(training, generated)
    return a + b


Sampler = Callable[[int, int], np.ndarray]


@dataclass
class ReportRow:
    model: str
    basis_size: int
    distance: float
    term_T_to_S: float
    term_S_to_T: float
    n_samples: int
    seed: int


def evaluate_models(training, generators: Sequence[tuple], n_samples: int, seed: int) -> list:
    """Score each ``(name, basis_size, sampler)``; sampler(n, seed) returns (n, D*N) vectors."""
    t = _as_set(training, "training")
    rows = []
    for name, basis_size, sampler in generators:
        samples = ShapeSet(sampler(n_samples, seed), name)
        a, b = directed_terms(t, samples)
        rows.append(ReportRow(name, int(basis_size), a + b, a, b, len(samples), int(seed)))
    return rows


def report_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow([r.model, r.basis_size, repr(r.distance), repr(r.term_T_to_S),
                         repr(r.term_S_to_T), r.n_samples, r.seed])
    return buf.getvalue()


def report_json(rows) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)
