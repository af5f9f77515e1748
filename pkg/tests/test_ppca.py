import numpy as np
import pytest
from scipy.linalg import subspace_angles

from kdshape.basis import ShapeMatrix, fit_pca
from kdshape.errors import InvalidBasisSize
from kdshape.ppca import SIGMA2_FLOOR, PpcaModel, fit_ppca, sample_ppca


def test_rank_b_data_recovers_subspace(rng):
    dim, b, s = 12, 2, 40
    q, _ = np.linalg.qr(rng.normal(size=(dim, b)))
    rows = (rng.normal(size=(s, b)) * [3.0, 1.5]) @ q.T + 0.25
    model = fit_ppca(ShapeMatrix.from_rows(rows, 4, 3), b)
    assert model.sigma2 == SIGMA2_FLOOR
    assert np.max(subspace_angles(model.W, q)) < 1e-8


def test_isotropic_noise_level(rng):
    dim, s = 6, 20000
    rows = rng.normal(size=(s, dim)) * 0.5
    model = fit_ppca(ShapeMatrix.from_rows(rows, 2, 3), 1)
    assert model.sigma2 == pytest.approx(0.25, rel=0.05)


def test_closed_form_against_eigensolve(rng):
    # 4 shapes in a 6-dimensional space
    rows = rng.normal(size=(4, 6))
    model = fit_ppca(ShapeMatrix.from_rows(rows, 2, 3), 2)
    centered = rows - rows.mean(axis=0)
    lam, vec = np.linalg.eigh(centered.T @ centered / 4)
    lam, vec = lam[::-1], vec[:, ::-1]
    sigma2 = lam[2:].sum() / 4
    assert model.sigma2 == pytest.approx(sigma2, rel=1e-10)
    expect = vec[:, :2] @ np.diag(lam[:2] - sigma2) @ vec[:, :2].T
    np.testing.assert_allclose(model.W @ model.W.T, expect, atol=1e-10)
    np.testing.assert_allclose(model.covariance(), expect + sigma2 * np.eye(6), atol=1e-10)


def test_sampling_moments(rng):
    rows = rng.normal(size=(10, 6)) * [3, 2, 1, 1, 0.5, 0.5]
    model = fit_ppca(ShapeMatrix.from_rows(rows, 2, 3), 2)
    x = sample_ppca(model, 200_000, seed=1)
    np.testing.assert_allclose(x.mean(axis=0), model.mean, atol=0.03)
    np.testing.assert_allclose(np.cov(x.T), model.covariance(), atol=0.06)


def test_sampling_deterministic(rng):
    model = fit_ppca(ShapeMatrix.from_rows(rng.normal(size=(6, 6)), 2, 3), 2)
    np.testing.assert_array_equal(sample_ppca(model, 5, 3), sample_ppca(model, 5, 3))
    assert sample_ppca(model, 0, 3).shape == (0, 6)


def test_span_agrees_with_pca(rng):
    m = ShapeMatrix.from_rows(rng.normal(size=(15, 9)) * np.arange(1, 10), 3, 3)
    model, basis = fit_ppca(m, 3), fit_pca(m, 3)
    assert np.max(subspace_angles(model.W, basis.components.T)) < 1e-8
    np.testing.assert_array_equal(model.mean, basis.mean)


def test_invalid_basis_size(rng):
    m = ShapeMatrix.from_rows(rng.normal(size=(4, 6)), 2, 3)
    for b in (0, 4):
        with pytest.raises(InvalidBasisSize):
            fit_ppca(m, b)


def test_round_trip(tmp_path, rng):
    model = fit_ppca(ShapeMatrix.from_rows(rng.normal(size=(6, 6)), 2, 3), 2)
    model.save(tmp_path / "p.kdsp")
    back = PpcaModel.load(tmp_path / "p.kdsp")
    np.testing.assert_array_equal(back.W, model.W)
    assert back.sigma2 == model.sigma2
