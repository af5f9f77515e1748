"""Synthetic stand-in datasets.

box-aspect
    Axis-aligned box with dims ``mode * (1, exp(spread * g), 1)``, ``g ~ N(0, 1)``,
    the mode picked from ``modes`` with probabilities ``weights``. Surface
    sampled with the blue-noise sampler, then normalized.
two-cluster-chairs-toy
    A seat slab (1 x 0.15 x 1) with a back slab (1 x h x 0.15) on its rear edge;
    ``h`` is ``back_heights[k] * exp(spread * g)`` for cluster ``k``.
bimodal-coeff
    Coefficient vectors, no geometry: isotropic Gaussians (std ``std``) centered
    at ``+center`` and ``-center`` along the first axis of a ``dim``-D space.

Every shape's randomness comes from ``default_rng([seed, shape_index, tag])``.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyDataset
from .pointcloud import ShapeDataset, normalize_cloud
from .sampling import box_mesh, merge_meshes, sample_surface

FAMILIES = ("box-aspect", "two-cluster-chairs-toy", "bimodal-coeff")

TAG_SHAPE = 1
TAG_SAMPLE = 2


def _check_count(n_shapes):
    if n_shapes < 2:
        raise EmptyDataset(f"a synthetic dataset needs at least 2 shapes, got {n_shapes}")


BOX_MODES = ((1.0, 1.0, 1.0), (1.0, 4.0, 1.0))


def box_dims(n_shapes, seed, modes=BOX_MODES, weights=None, spread=0.05, return_labels=False):
    """Box dimensions of each shape in the box-aspect family."""
    modes = np.asarray(modes, dtype=np.float64)
    weights = np.ones(len(modes)) if weights is None else np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    dims, labels = [], []
    for s in range(n_shapes):
        rng = np.random.default_rng([seed, s, TAG_SHAPE])
        k = int(rng.choice(len(modes), p=weights))
        dims.append(modes[k] * np.array([1.0, np.exp(spread * rng.standard_normal()), 1.0]))
        labels.append(k)
    return (dims, np.array(labels)) if return_labels else dims


def box_aspect_family(n_shapes, n_points, seed, modes=BOX_MODES, weights=None, spread=0.05,
                      return_labels=False):
    _check_count(n_shapes)
    dims, labels = box_dims(n_shapes, seed, modes, weights, spread, return_labels=True)
    clouds = []
    for s, d in enumerate(dims):
        cloud = sample_surface(box_mesh(d), n_points, seed=[seed, s, TAG_SAMPLE])
        clouds.append(normalize_cloud(cloud))
    ds = ShapeDataset(clouds, [f"box_{s:05d}" for s in range(n_shapes)])
    return (ds, labels) if return_labels else ds


def chair_mesh(back_height):
    seat = box_mesh((1.0, 0.15, 1.0))
    back = box_mesh((1.0, back_height, 0.15))
    back = type(back)(back.vertices + np.array([0.0, 0.075 + 0.5 * back_height, -0.425]), back.faces)
    return merge_meshes([seat, back])


def two_cluster_chairs(n_shapes, n_points, seed, back_heights=(0.3, 1.0), spread=0.05,
                       return_labels=False):
    _check_count(n_shapes)
    clouds, labels = [], []
    for s in range(n_shapes):
        rng = np.random.default_rng([seed, s, TAG_SHAPE])
        k = int(rng.integers(len(back_heights)))
        h = back_heights[k] * np.exp(spread * rng.standard_normal())
        clouds.append(normalize_cloud(sample_surface(chair_mesh(h), n_points, seed=[seed, s, TAG_SAMPLE])))
        labels.append(k)
    ds = ShapeDataset(clouds, [f"chair_{s:05d}" for s in range(n_shapes)])
    return (ds, np.array(labels)) if return_labels else ds


def bimodal_coefficients(n_shapes, seed, dim=2, center=3.0, std=0.5, return_labels=False):
    _check_count(n_shapes)
    rng = np.random.default_rng([seed, 0, TAG_SHAPE])
    labels = rng.integers(0, 2, size=n_shapes)
    centers = np.zeros((2, dim))
    centers[0, 0], centers[1, 0] = center, -center
    data = centers[labels] + std * rng.standard_normal((n_shapes, dim))
    return (data, labels) if return_labels else data


def bimodal_centers(dim=2, center=3.0):
    c = np.zeros((2, dim))
    c[0, 0], c[1, 0] = center, -center
    return c
