import numpy as np
import pytest

from kdshape.pointcloud import PointCloud, ShapeDataset

# entries whose magnitude is below this are compared absolutely; finite
# differences of exactly-zero gradients (biases feeding batch norm) sit at ~1e-10
GRAD_FLOOR = 1e-5


def finite_difference(loss, params, h=1e-5):
    """Central differences of ``loss()`` w.r.t. every entry of every array in ``params``."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), GRAD_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def transposed_lattice_dataset(seed, n_shapes=20, rank_family=True):
    """Axis-scaled copies of a jittered 4x4x2 lattice; one shape has two points swapped.

    Returns (dataset, index of the corrupted shape, the swapped pair, the clean dataset).
    The clean family has centered rank 3 (one scale per axis).
    """
    rng = np.random.default_rng(seed)
    grid = np.stack(np.meshgrid(np.arange(4), np.arange(4), np.arange(2), indexing="ij"), -1)
    base = grid.reshape(-1, 3).astype(float) + 1.0
    base = base + 0.1 * rng.standard_normal(base.shape)
    clean = [base * (1.0 + 0.5 * rng.uniform(-1, 1, 3)) for _ in range(n_shapes)]
    i, j = rng.choice(len(base), 2, replace=False)
    corrupted = [c.copy() for c in clean]
    corrupted[3][[i, j]] = corrupted[3][[j, i]]
    return (ShapeDataset([PointCloud(c) for c in corrupted]), 3, (int(i), int(j)),
            ShapeDataset([PointCloud(c) for c in clean]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
