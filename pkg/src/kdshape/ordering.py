"""Spatial point orderings and swap-based ordering refinement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numba
import numpy as np

from .basis import PcaBasis, ShapeMatrix, fit_pca
from .errors import InvalidBasisSize
from .pointcloud import PointCloud, ShapeDataset

KINDS = ("kd-alternating", "kd-longest-dim", "scan-xyz-sum")


@dataclass(frozen=True)
class OrderingStrategy:
    """How to order a cloud.

    Ties on the active key are broken by the cyclically next axes (for the
    scan, by x, then y, then z); fully equal points keep a stable order.
    """

    kind: str = "kd-alternating"
    tie_break: str = "cyclic-axes"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ordering strategy {self.kind!r}; choose from {KINDS}")


def _strategy(strategy) -> OrderingStrategy:
    if isinstance(strategy, OrderingStrategy):
        return strategy
    return OrderingStrategy(str(strategy))


def _axis_sort(xyz, idx, axis):
    keys = xyz[idx]
    # np.lexsort sorts by the last key first
    order = np.lexsort((keys[:, (axis + 2) % 3], keys[:, (axis + 1) % 3], keys[:, axis]))
    return idx[order]


def _kd_order(xyz, longest: bool) -> np.ndarray:
    n = len(xyz)
    out = np.empty(n, dtype=np.int64)
    pos = 0
    # explicit stack of (indices, depth); right pushed first so left is emitted first
    stack = [(np.arange(n), 0)]
    while stack:
        idx, depth = stack.pop()
        if len(idx) == 1:
            out[pos] = idx[0]
            pos += 1
            continue
        if longest:
            sub = xyz[idx]
            axis = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
        else:
            axis = depth % 3
        idx = _axis_sort(xyz, idx, axis)
        half = (len(idx) + 1) // 2
        stack.append((idx[half:], depth + 1))
        stack.append((idx[:half], depth + 1))
    return out


def ordering_permutation(cloud: PointCloud, strategy="kd-alternating") -> np.ndarray:
    """Permutation ``perm`` such that ``cloud.points[perm]`` is the ordered cloud."""
    kind = _strategy(strategy).kind
    xyz = cloud.xyz
    if kind == "kd-alternating":
        return _kd_order(xyz, longest=False)
    if kind == "kd-longest-dim":
        return _kd_order(xyz, longest=True)
    total = xyz.sum(axis=1)
    return np.lexsort((xyz[:, 2], xyz[:, 1], xyz[:, 0], total))


def sort_cloud(cloud: PointCloud, strategy="kd-alternating") -> PointCloud:
    return cloud.permuted(ordering_permutation(cloud, strategy))


def sort_dataset(dataset: ShapeDataset, strategy="kd-alternating") -> ShapeDataset:
    return dataset.replace_clouds(sort_cloud(c, strategy) for c in dataset.clouds)


def locality_score(cloud: PointCloud, ordering=None) -> float:
    """Mean xyz distance between consecutive points of the ordering (lower is more local)."""
    xyz = cloud.xyz if ordering is None else cloud.xyz[np.asarray(ordering)]
    if len(xyz) < 2:
        return 0.0
    return float(np.mean(np.linalg.norm(np.diff(xyz, axis=0), axis=1)))


# ---------------------------------------------------------------------------
# swap optimization


@dataclass(frozen=True)
class SwapSchedule:
    swaps_per_shape: int = 10_000
    outer_iterations: int = 1_000
    seed: int = 0

    def __post_init__(self):
        if self.swaps_per_shape < 1 or self.outer_iterations < 1:
            raise ValueError("swaps_per_shape and outer_iterations must be >= 1")


class OrderingResult(NamedTuple):
    dataset: ShapeDataset
    basis: PcaBasis
    error_trace: np.ndarray
    initial_error: float


RESYNC_EVERY = 1000


@numba.njit(cache=True)
def _full_state(x, mu, comps):
    b = comps.shape[0]
    n, d = x.shape
    c = np.zeros(b)
    for k in range(b):
        acc = 0.0
        for i in range(n):
            for a in range(d):
                acc += comps[k, i, a] * (x[i, a] - mu[i, a])
        c[k] = acc
    err = 0.0
    for i in range(n):
        for a in range(d):
            r = x[i, a] - mu[i, a]
            for k in range(b):
                r -= comps[k, i, a] * c[k]
            err += r * r
    return c, err


@numba.njit(cache=True)
def _swap_pass(x, mu, comps, pairs_i, pairs_j, history):
    """K candidate transpositions of one shape's points at a fixed basis.

    ``x`` is permuted in place. Each candidate's error change is computed from
    the two touched point blocks and the cached coefficients in O(B*D).
    Returns (accepted, final error, largest incremental-vs-full drift).
    """
    b = comps.shape[0]
    d = x.shape[1]
    c, err = _full_state(x, mu, comps)
    delta = np.empty(d)
    dc = np.empty(b)
    accepted = 0
    drift = 0.0
    record = history.shape[0] > 0
    for t in range(pairs_i.shape[0]):
        i = pairs_i[t]
        j = pairs_j[t]
        dw = 0.0
        for a in range(d):
            g = x[j, a] - x[i, a]
            delta[a] = g
            wi = x[i, a] - mu[i, a]
            wj = x[j, a] - mu[j, a]
            dw += 2.0 * g * (wi - wj) + 2.0 * g * g
        dcn = 0.0
        for k in range(b):
            acc = 0.0
            for a in range(d):
                acc += (comps[k, i, a] - comps[k, j, a]) * delta[a]
            dc[k] = acc
            dcn += 2.0 * c[k] * acc + acc * acc
        change = dw - dcn
        if change < 0.0:
            for a in range(d):
                tmp = x[i, a]
                x[i, a] = x[j, a]
                x[j, a] = tmp
            for k in range(b):
                c[k] += dc[k]
            err += change
            accepted += 1
            if accepted % RESYNC_EVERY == 0:
                c, full = _full_state(x, mu, comps)
                gap = abs(full - err)
                if gap > drift:
                    drift = gap
                err = full
        if record:
            history[t] = err
    return accepted, err, drift


def swap_pairs(rng: np.random.Generator, n_points: int, count: int):
    """``count`` index pairs (i, j), each drawn uniformly with i != j."""
    i = rng.integers(0, n_points, size=count)
    j = rng.integers(0, n_points - 1, size=count)
    j = j + (j >= i)
    return i, j


def shape_rng(seed: int, iteration: int, shape_index: int) -> np.random.Generator:
    """Independent stream per (seed, iteration, shape) so shapes can run in any order."""
    return np.random.default_rng([int(seed), int(iteration), int(shape_index)])


def swap_refine_shape(points: np.ndarray, basis: PcaBasis, pairs, history=None):
    """Run the accept-if-better swap loop on one (N, D) array in place."""
    n, d = points.shape
    mu = basis.mean.reshape(n, d)
    comps = np.ascontiguousarray(basis.components.reshape(basis.basis_size, n, d))
    hist = np.empty(0) if history is None else history
    pi = np.ascontiguousarray(pairs[0], dtype=np.int64)
    pj = np.ascontiguousarray(pairs[1], dtype=np.int64)
    return _swap_pass(points, mu, comps, pi, pj, hist)


def _mean_error(basis: PcaBasis, stacked: np.ndarray) -> float:
    return float(np.mean(basis.reconstruction_error(stacked.reshape(len(stacked), -1))))


def _fit(stacked, n, d, schema, b):
    return fit_pca(ShapeMatrix(stacked.reshape(len(stacked), -1).T, n, d, schema), b)


def optimize_ordering(dataset: ShapeDataset, basis_size: int, schedule: SwapSchedule,
                      on_iteration: Callable[[int, float], None] | None = None) -> OrderingResult:
    """Refine point orderings by random accepted-if-improving swaps.

    Each outer iteration fits a basis (mean and components) to the current
    orderings, runs ``swaps_per_shape`` candidate swaps on every shape against
    that fixed basis, then refits. ``error_trace[t]`` is the mean
    reconstruction error under the basis refit after iteration ``t``;
    ``initial_error`` is the mean error before any swap.
    """
    n, d, s = dataset.n_points, dataset.attr_dim, dataset.n_shapes
    if not 1 <= basis_size <= min(n * d, s):
        raise InvalidBasisSize(f"B={basis_size} outside [1, min(D*N={n * d}, S={s})]")
    schema = dataset.attr_schema
    stacked = np.stack([c.points for c in dataset.clouds]).copy()
    basis = _fit(stacked, n, d, schema, basis_size)
    initial = _mean_error(basis, stacked)
    trace = np.empty(schedule.outer_iterations)
    for it in range(schedule.outer_iterations):
        for k in range(s):
            rng = shape_rng(schedule.seed, it, k)
            pairs = swap_pairs(rng, n, schedule.swaps_per_shape)
            swap_refine_shape(stacked[k], basis, pairs)
        basis = _fit(stacked, n, d, schema, basis_size)
        trace[it] = _mean_error(basis, stacked)
        if on_iteration is not None:
            on_iteration(it + 1, float(trace[it]))
    out = dataset.replace_clouds(PointCloud(stacked[k], schema) for k in range(s))
    return OrderingResult(out, basis, trace, initial)
