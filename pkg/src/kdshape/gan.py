"""Feature-matching GAN over shape-basis coefficients.

The discriminator ascends the vanilla objective
``L_d = E[log D(x)] + E[log(1 - D(G(z)))]`` (implemented as descent on
``-L_d``, i.e. binary cross-entropy). The generator descends

    L_g = ||mean f(x) - mean f(G(z))||^2 + ||cov f(x) - cov f(G(z))||_F^2

where ``f`` is the post-activation output of a chosen discriminator hidden
layer and ``cov`` uses divisor M. Real and generated batches go through the
discriminator as one concatenated batch, so its batch norm sees both.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from . import container
from .basis import PcaBasis
from .errors import BasisMismatch, BatchTooSmall, DimensionMismatch, Diverged, NonFiniteLoss
from .nn import (
    AdamState,
    DenseNet,
    LayerSpec,
    adam_step,
    backward,
    forward,
    init_net,
    layer_arrays,
    mlp_specs,
    net_from_arrays,
)

MAGIC = b"KDSG"
TAG_GEN_INIT, TAG_DISC_INIT, TAG_TRAIN = 11, 12, 13


@dataclass
class GanConfig:
    z_dim: int = 100
    hidden: int = 100
    n_hidden: int = 4
    disc_lr: float = 1e-4
    gen_lr: float = 0.0025
    disc_accuracy_gate: float = 0.8
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    leaky_alpha: float = 0.2
    feature_layer: int = -1  # discriminator hidden layer index; -1 = last hidden

    def __post_init__(self):
        if self.disc_lr <= 0 or self.gen_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.disc_accuracy_gate <= 1.0:
            raise ValueError("disc_accuracy_gate must lie in [0, 1]")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")

    @property
    def feature_index(self) -> int:
        return self.feature_layer % self.n_hidden


@dataclass
class History:
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    d_updates: list = field(default_factory=list)
    step_accuracy: list = field(default_factory=list)
    step_d_updated: list = field(default_factory=list)

    def rows(self):
        return list(zip(range(1, len(self.d_loss) + 1), self.d_loss, self.g_loss, self.accuracy, self.d_updates))


@dataclass
class GanModel:
    generator: DenseNet
    discriminator: DenseNet
    config: GanConfig
    basis_size: int
    history: History = field(default_factory=History)
    basis_digest: str | None = None
    gen_state: AdamState | None = None
    disc_state: AdamState | None = None

    @property
    def z_dim(self) -> int:
        return self.generator.in_dim


def build_model(basis_size: int, config: GanConfig, basis_digest: str | None = None) -> GanModel:
    g_specs = mlp_specs(config.z_dim, config.hidden, config.n_hidden, basis_size,
                        hidden_activation="relu", out_activation="linear")
    d_specs = mlp_specs(basis_size, config.hidden, config.n_hidden, 1,
                        hidden_activation="leaky_relu", out_activation="sigmoid",
                        alpha=config.leaky_alpha)
    gen = init_net(g_specs, [config.seed, TAG_GEN_INIT])
    disc = init_net(d_specs, [config.seed, TAG_DISC_INIT])
    return GanModel(gen, disc, config, basis_size, basis_digest=basis_digest,
                    gen_state=AdamState(lr=config.gen_lr), disc_state=AdamState(lr=config.disc_lr))


def vanilla_objective(p_real, p_fake) -> float:
    """``mean log p_real + mean log(1 - p_fake)`` from probabilities."""
    p_real = np.asarray(p_real, dtype=np.float64)
    p_fake = np.asarray(p_fake, dtype=np.float64)
    return float(np.mean(np.log(p_real)) + np.mean(np.log1p(-p_fake)))


def vanilla_objective_logits(l_real, l_fake) -> float:
    return float(np.mean(log_expit(l_real)) + np.mean(log_expit(-l_fake)))


def feature_matching(f_real, f_fake):
    """Loss and gradients w.r.t. both feature blocks (rows are samples)."""
    m_r, m_f = f_real.mean(axis=0), f_fake.mean(axis=0)
    c_r = f_real - m_r
    c_f = f_fake - m_f
    cov_r = c_r.T @ c_r / len(f_real)
    cov_f = c_f.T @ c_f / len(f_fake)
    gap_mean = m_r - m_f
    gap_cov = cov_r - cov_f
    loss = float(gap_mean @ gap_mean + np.sum(gap_cov * gap_cov))
    g_real = (2.0 / len(f_real)) * gap_mean + (4.0 / len(f_real)) * c_r @ gap_cov
    g_fake = -(2.0 / len(f_fake)) * gap_mean - (4.0 / len(f_fake)) * c_f @ gap_cov
    return loss, g_real, g_fake


def _check_batches(model, real, z):
    real = np.asarray(real, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if real.ndim != 2 or real.shape[1] != model.basis_size:
        raise DimensionMismatch(f"real batch must be (M, {model.basis_size}), got {real.shape}")
    if z.ndim != 2 or z.shape[1] != model.z_dim:
        raise DimensionMismatch(f"z batch must be (M, {model.z_dim}), got {z.shape}")
    if len(real) < 2 or len(z) < 2:
        raise BatchTooSmall("GAN losses need at least 2 samples per batch")
    return real, z


@dataclass
class DiscriminatorStep:
    objective: float  # L_d, the quantity the discriminator ascends
    grads: list  # gradients of -L_d w.r.t. discriminator parameters
    accuracy: float


def discriminator_loss(model: GanModel, real_batch, z_batch, update_stats: bool = True) -> DiscriminatorStep:
    real, z = _check_batches(model, real_batch, z_batch)
    fake, _ = forward(model.generator, z, "train", update_stats=False)
    joint = np.vstack([real, fake])
    _, tape = forward(model.discriminator, joint, "train", update_stats=update_stats)
    logits = tape.layer_cache[-1]["a"][:, 0]
    if not np.all(np.isfinite(logits)):
        raise NonFiniteLoss("non-finite discriminator logits", logits=logits)
    m = len(real)
    l_real, l_fake = logits[:m], logits[m:]
    objective = vanilla_objective_logits(l_real, l_fake)
    if not np.isfinite(objective):
        raise NonFiniteLoss("non-finite discriminator objective", logits=logits)
    dlogit = np.concatenate([-expit(-l_real) / m, expit(l_fake) / len(l_fake)])
    grads, _ = backward(model.discriminator, tape, dlogit[:, None], wrt_preactivation=True)
    accuracy = (np.sum(l_real > 0) + np.sum(l_fake < 0)) / len(logits)
    return DiscriminatorStep(objective, grads, float(accuracy))


def generator_loss(model: GanModel, real_batch, z_batch, update_stats: bool = True):
    """Feature-matching loss and its gradients w.r.t. generator parameters."""
    real, z = _check_batches(model, real_batch, z_batch)
    fake, g_tape = forward(model.generator, z, "train", update_stats=update_stats)
    joint = np.vstack([real, fake])
    _, d_tape = forward(model.discriminator, joint, "train", update_stats=False)
    k = model.config.feature_index
    feats = d_tape.layer_cache[k]["out"]
    m = len(real)
    loss, g_real, g_fake = feature_matching(feats[:m], feats[m:])
    if not np.isfinite(loss):
        raise NonFiniteLoss("non-finite feature-matching loss")
    _, d_input = backward(model.discriminator, d_tape, np.vstack([g_real, g_fake]), from_layer=k)
    grads, _ = backward(model.generator, g_tape, d_input[m:])
    return loss, grads


def sample_z(seed, count: int, z_dim: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(count, z_dim))


def train(model: GanModel, coeffs, config: GanConfig | None = None, on_epoch=None) -> GanModel:
    """Alternate gated discriminator updates and feature-matching generator updates.

    Each step draws a real minibatch from a shuffled epoch order; the
    discriminator is updated only if its accuracy on this step's batches is
    below the gate. Partial trailing batches are dropped.
    """
    config = config or model.config
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[1] != model.basis_size:
        raise DimensionMismatch(f"coefficients must be (S, {model.basis_size}), got {coeffs.shape}")
    n = len(coeffs)
    bs = config.batch_size
    if n < bs:
        raise BatchTooSmall(f"{n} training shapes is fewer than batch_size={bs}")
    if model.gen_state is None:
        model.gen_state = AdamState(lr=config.gen_lr)
    if model.disc_state is None:
        model.disc_state = AdamState(lr=config.disc_lr)
    rng = np.random.default_rng([config.seed, TAG_TRAIN])
    hist = model.history
    bad = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        d_vals, g_vals, accs, updates = [], [], [], 0
        for start in range(0, n - bs + 1, bs):
            real = coeffs[order[start:start + bs]]
            z_d = rng.uniform(-1.0, 1.0, size=(bs, model.z_dim))
            z_g = rng.uniform(-1.0, 1.0, size=(bs, model.z_dim))
            try:
                step = discriminator_loss(model, real, z_d)
                trained = step.accuracy < config.disc_accuracy_gate
                if trained:
                    adam_step(model.discriminator.parameters(), step.grads, model.disc_state)
                    updates += 1
                g_val, g_grads = generator_loss(model, real, z_g)
                adam_step(model.generator.parameters(), g_grads, model.gen_state)
            except NonFiniteLoss as exc:
                bad += 1
                if bad >= 3:
                    raise Diverged(f"non-finite loss for 3 consecutive steps in epoch {epoch + 1}") from exc
                continue
            bad = 0
            d_vals.append(step.objective)
            g_vals.append(g_val)
            accs.append(step.accuracy)
            hist.step_accuracy.append(step.accuracy)
            hist.step_d_updated.append(trained)
        hist.d_loss.append(float(np.mean(d_vals)) if d_vals else float("nan"))
        hist.g_loss.append(float(np.mean(g_vals)) if g_vals else float("nan"))
        hist.accuracy.append(float(np.mean(accs)) if accs else float("nan"))
        hist.d_updates.append(updates)
        if on_epoch is not None:
            on_epoch(epoch + 1, hist)
    model.generator.mode = "eval"
    model.discriminator.mode = "eval"
    return model


def generate_coefficients(model: GanModel, z) -> np.ndarray:
    """Eval-mode generator output, evaluated one row at a time.

    Row-wise evaluation makes each output independent of how many codes are
    passed together, so endpoints of an interpolation match plain generation
    bit for bit.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != model.z_dim:
        raise DimensionMismatch(f"codes must have {model.z_dim} entries, got {z.shape[1]}")
    out = np.empty((len(z), model.basis_size))
    for k in range(len(z)):
        out[k] = forward(model.generator, z[k:k + 1], "eval")[0][0]
    return out


def _check_basis(model: GanModel, basis: PcaBasis):
    if basis.basis_size != model.basis_size:
        raise DimensionMismatch(f"model generates {model.basis_size} coefficients, basis has {basis.basis_size}")


def generate_vectors(model: GanModel, basis: PcaBasis, count: int, seed) -> np.ndarray:
    _check_basis(model, basis)
    if count == 0:
        return np.empty((0, basis.dim))
    return basis.reconstruct(generate_coefficients(model, sample_z(seed, count, model.z_dim)))


def generate(model: GanModel, basis: PcaBasis, count: int, seed) -> list:
    return [basis.to_cloud(v) for v in generate_vectors(model, basis, count, seed)]


def interpolation_codes(z1, z2, steps: int) -> np.ndarray:
    if steps < 2:
        raise ValueError("steps must be at least 2")
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    t = np.arange(steps, dtype=np.float64) / (steps - 1)
    return (1.0 - t)[:, None] * z1[None, :] + t[:, None] * z2[None, :]


def interpolate(model: GanModel, basis: PcaBasis, z1, z2, steps: int) -> list:
    """Shapes along the straight line from z1 to z2 in code space."""
    _check_basis(model, basis)
    z = interpolation_codes(z1, z2, steps)
    if z.shape[1] != model.z_dim:
        raise DimensionMismatch(f"codes must have {model.z_dim} entries")
    return [basis.to_cloud(v) for v in basis.reconstruct(generate_coefficients(model, z))]


# persistence ---------------------------------------------------------------


def _specs_json(net: DenseNet):
    return [dataclasses.asdict(s) for s in net.specs()]


def model_to_bytes(model: GanModel) -> bytes:
    header = {
        "kind": "coeff-gan",
        "z_dim": model.z_dim,
        "B": model.basis_size,
        "config": dataclasses.asdict(model.config),
        "generator": _specs_json(model.generator),
        "discriminator": _specs_json(model.discriminator),
        "basis_digest": model.basis_digest,
        "history": {
            "d_loss": model.history.d_loss,
            "g_loss": model.history.g_loss,
            "accuracy": model.history.accuracy,
            "d_updates": model.history.d_updates,
        },
    }
    arrays = {f"G.{k}": v for k, v in layer_arrays(model.generator).items()}
    arrays.update({f"D.{k}": v for k, v in layer_arrays(model.discriminator).items()})
    return container.encode(MAGIC, header, arrays)


def model_from_bytes(blob: bytes, basis: PcaBasis | None = None) -> GanModel:
    header, arrays = container.decode(blob, MAGIC)
    if basis is not None and header["basis_digest"] is not None and header["basis_digest"] != basis.digest():
        raise BasisMismatch("model was trained against a different basis file")
    gen = net_from_arrays([LayerSpec(**s) for s in header["generator"]], arrays, prefix="G.")
    disc = net_from_arrays([LayerSpec(**s) for s in header["discriminator"]], arrays, prefix="D.")
    hist = History(**header["history"])
    model = GanModel(gen, disc, GanConfig(**header["config"]), header["B"], hist, header["basis_digest"])
    if basis is not None:
        _check_basis(model, basis)
    return model


def save_model(model: GanModel, path) -> None:
    container.write(path, model_to_bytes(model))


def load_model(path, basis: PcaBasis | None = None) -> GanModel:
    return model_from_bytes(container.read(path), basis)
