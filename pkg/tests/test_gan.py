import math

import numpy as np
import pytest

from conftest import finite_difference, max_relative_error
from kdshape.basis import PcaBasis
from kdshape.errors import BasisMismatch, BatchTooSmall, DimensionMismatch
from kdshape.gan import (
    GanConfig,
    build_model,
    discriminator_loss,
    feature_matching,
    generate,
    generate_coefficients,
    generator_loss,
    interpolate,
    load_model,
    model_from_bytes,
    model_to_bytes,
    sample_z,
    save_model,
    train,
    vanilla_objective,
)
from kdshape.nn import Dense, DenseNet, forward
from kdshape.synth import bimodal_centers, bimodal_coefficients


def _tiny(b=2, seed=0, **kw):
    cfg = GanConfig(z_dim=3, hidden=5, n_hidden=2, seed=seed, batch_size=4, **kw)
    return build_model(b, cfg)


def _coef_basis(b=2):
    # identity-like basis: coefficients land in the first b entries of one point
    comps = np.zeros((b, 3))
    comps[np.arange(b), np.arange(b)] = 1.0
    return PcaBasis(np.zeros(3), comps, np.ones(b), 1, 3, ("position",), 10)


def test_objective_extremes():
    assert vanilla_objective(np.full(4, 1 - 1e-9), np.full(4, 1e-9)) == pytest.approx(0.0, abs=1e-8)
    assert vanilla_objective(np.full(4, 0.5), np.full(4, 0.5)) == pytest.approx(2 * math.log(0.5), rel=1e-15)


def test_discriminator_objective_scalar_oracle(rng):
    model = _tiny()
    real = rng.normal(size=(4, 2))
    z = rng.uniform(-1, 1, size=(4, 3))
    step = discriminator_loss(model, real, z, update_stats=False)
    fake, _ = forward(model.generator, z, "train", update_stats=False)
    probs, _ = forward(model.discriminator, np.vstack([real, fake]), "train", update_stats=False)
    p = probs[:, 0].tolist()
    expect = sum(math.log(v) for v in p[:4]) / 4 + sum(math.log(1 - v) for v in p[4:]) / 4
    assert step.objective == pytest.approx(expect, rel=1e-12)
    acc = (sum(v > 0.5 for v in p[:4]) + sum(v < 0.5 for v in p[4:])) / 8
    assert step.accuracy == acc


def test_feature_matching_toy():
    loss, _, _ = feature_matching(np.array([[0.0], [2.0]]), np.array([[1.0], [1.0]]))
    assert loss == pytest.approx(1.0, abs=1e-15)


def test_feature_matching_zero_on_matched_statistics(rng):
    f = rng.normal(size=(6, 3))
    loss, gr, gf = feature_matching(f, f[::-1].copy())
    assert loss == pytest.approx(0.0, abs=1e-28)
    assert np.allclose(gf, 0.0, atol=1e-14)


def test_generator_loss_zero_when_fake_equals_real(rng):
    model = _tiny()
    # generator replaced by an identity map, fed the real batch as its code
    model.config = GanConfig(z_dim=2, hidden=5, n_hidden=2, batch_size=4)
    model.generator = DenseNet([Dense(np.eye(2), np.zeros(2), "linear")])
    real = rng.normal(size=(4, 2))
    loss, _ = generator_loss(model, real, real)
    assert loss == pytest.approx(0.0, abs=1e-24)


def test_feature_matching_gradients(rng):
    fr = rng.normal(size=(5, 3))
    ff = rng.normal(size=(5, 3))
    _, gr, gf = feature_matching(fr, ff)
    num = finite_difference(lambda: feature_matching(fr, ff)[0], [fr, ff])
    assert max_relative_error([gr, gf], num) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_discriminator_gradients(seed):
    rng = np.random.default_rng(seed)
    model = _tiny(seed=seed)
    real = rng.normal(size=(4, 2))
    z = rng.uniform(-1, 1, size=(4, 3))
    step = discriminator_loss(model, real, z, update_stats=False)
    loss = lambda: -discriminator_loss(model, real, z, update_stats=False).objective  # noqa: E731
    num = finite_difference(loss, model.discriminator.parameters())
    assert max_relative_error(step.grads, num) < 1e-4


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("feature_layer", [-1, 0])
def test_generator_gradients(seed, feature_layer):
    rng = np.random.default_rng(seed)
    model = _tiny(seed=seed, feature_layer=feature_layer)
    real = rng.normal(size=(4, 2))
    z = rng.uniform(-1, 1, size=(4, 3))
    _, grads = generator_loss(model, real, z, update_stats=False)
    loss = lambda: generator_loss(model, real, z, update_stats=False)[0]  # noqa: E731
    num = finite_difference(loss, model.generator.parameters())
    assert max_relative_error(grads, num) < 1e-4


def test_losses_need_two_samples(rng):
    model = _tiny()
    with pytest.raises(BatchTooSmall):
        discriminator_loss(model, rng.normal(size=(1, 2)), rng.normal(size=(1, 3)))
    with pytest.raises(DimensionMismatch):
        generator_loss(model, rng.normal(size=(4, 3)), rng.normal(size=(4, 3)))


def test_gate_zero_freezes_discriminator():
    coeffs = bimodal_coefficients(32, seed=0)
    model = build_model(2, GanConfig(z_dim=4, hidden=8, n_hidden=2, batch_size=8, epochs=5,
                                     disc_accuracy_gate=0.0))
    before = [p.copy() for p in model.discriminator.parameters()]
    train(model, coeffs)
    for a, b in zip(before, model.discriminator.parameters()):
        np.testing.assert_array_equal(a, b)
    assert sum(model.history.d_updates) == 0


def test_gate_invariant():
    coeffs = bimodal_coefficients(64, seed=1)
    cfg = GanConfig(z_dim=4, hidden=8, n_hidden=2, batch_size=8, epochs=20, disc_accuracy_gate=0.6)
    model = train(build_model(2, cfg), coeffs)
    h = model.history
    for acc, upd in zip(h.step_accuracy, h.step_d_updated):
        assert upd == (acc < 0.6)
    assert model.disc_state.t == sum(h.d_updates) == sum(h.step_d_updated)
    assert 0 < sum(h.d_updates) < len(h.step_accuracy)


def test_training_deterministic():
    coeffs = bimodal_coefficients(32, seed=0)
    cfg = GanConfig(z_dim=4, hidden=8, n_hidden=2, batch_size=8, epochs=4, seed=3)
    a = train(build_model(2, cfg), coeffs)
    b = train(build_model(2, cfg), coeffs)
    assert a.history.rows() == b.history.rows()
    for p, q in zip(a.generator.parameters(), b.generator.parameters()):
        np.testing.assert_array_equal(p, q)


def test_train_needs_full_batch():
    with pytest.raises(BatchTooSmall):
        train(_tiny(), np.zeros((3, 2)))


@pytest.fixture(scope="module")
def bimodal_model():
    coeffs = bimodal_coefficients(128, seed=0)
    cfg = GanConfig(epochs=2000, seed=0)
    return train(build_model(2, cfg), coeffs), coeffs


@pytest.mark.slow
def test_bimodal_modes_covered(bimodal_model):
    model, _ = bimodal_model
    c = generate_coefficients(model, sample_z(7, 1000, model.z_dim))
    centers = bimodal_centers()
    nearest = np.argmin(((c[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    share = np.mean(nearest == 0)
    assert 0.2 <= share <= 0.8


@pytest.mark.slow
def test_generated_mean_near_training_mean(bimodal_model):
    model, coeffs = bimodal_model
    c = generate_coefficients(model, sample_z(11, 10_000, model.z_dim))
    assert np.all(np.abs(c.mean(axis=0) - coeffs.mean(axis=0)) < 0.5)


@pytest.mark.slow
def test_interpolation_is_nonlinear(bimodal_model):
    model, _ = bimodal_model
    basis = _coef_basis()
    z = sample_z(5, 2, model.z_dim)
    frames = interpolate(model, basis, z[0], z[1], 3)
    mid = frames[1].points
    avg = 0.5 * (frames[0].points + frames[2].points)
    assert np.linalg.norm(mid - avg) > 1e-6


def test_generate_count_zero_and_mean_shape(rng):
    model = _tiny()
    basis = PcaBasis(rng.normal(size=6), np.linalg.qr(rng.normal(size=(6, 2)))[0].T, np.ones(2), 2, 3)
    assert generate(model, basis, 0, seed=0) == []
    model.generator.layers[-1].W[:] = 0.0
    model.generator.layers[-1].b[:] = 0.0
    model.generator.mode = "eval"
    for cloud in generate(model, basis, 4, seed=1):
        np.testing.assert_array_equal(cloud.points, basis.mean.reshape(2, 3))


def test_generation_is_batch_independent(rng):
    model = train(_tiny(), bimodal_coefficients(16, seed=0), GanConfig(
        z_dim=3, hidden=5, n_hidden=2, batch_size=4, epochs=2))
    z = sample_z(0, 6, 3)
    whole = generate_coefficients(model, z)
    for k in range(6):
        np.testing.assert_array_equal(generate_coefficients(model, z[k]), whole[k:k + 1])


def test_interpolate_endpoints():
    model = _tiny()
    model.generator.mode = "eval"
    basis = _coef_basis()
    z = sample_z(3, 2, 3)
    frames = interpolate(model, basis, z[0], z[1], 2)
    direct = basis.reconstruct(generate_coefficients(model, z))
    np.testing.assert_array_equal(frames[0].points.ravel(), direct[0])
    np.testing.assert_array_equal(frames[1].points.ravel(), direct[1])
    same = interpolate(model, basis, z[0], z[0], 4)
    for f in same[1:]:
        np.testing.assert_array_equal(f.points, same[0].points)
    with pytest.raises(DimensionMismatch):
        interpolate(model, basis, np.zeros(4), np.zeros(4), 2)
    with pytest.raises(ValueError):
        interpolate(model, basis, z[0], z[1], 1)


def test_model_round_trip(tmp_path):
    basis = _coef_basis()
    model = train(build_model(2, GanConfig(z_dim=3, hidden=5, n_hidden=2, batch_size=4, epochs=2),
                              basis.digest()), bimodal_coefficients(8, seed=0))
    save_model(model, tmp_path / "m.kdsg")
    back = load_model(tmp_path / "m.kdsg", basis)
    z = sample_z(0, 5, 3)
    np.testing.assert_array_equal(generate_coefficients(model, z), generate_coefficients(back, z))
    assert back.history.d_loss == model.history.d_loss
    assert model_to_bytes(back) == model_to_bytes(model)


def test_model_refuses_other_basis(rng):
    basis = _coef_basis()
    model = build_model(2, GanConfig(z_dim=3, hidden=5, n_hidden=2, batch_size=4), basis.digest())
    other = PcaBasis(np.ones(3), basis.components, basis.singular_values, 1, 3)
    with pytest.raises(BasisMismatch):
        model_from_bytes(model_to_bytes(model), other)
