"""Small dense networks with hand-derived gradients.

Layer k computes ``act(bn(x @ W.T + b))``; batch norm is optional per layer.
All arithmetic is float64.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import BatchTooSmall, InvalidSpec, ShapeMismatch, TapeMismatch

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "linear")


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"
    alpha: float = 0.2
    batch_norm: bool = False


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5


@dataclass
class Dense:
    W: np.ndarray  # (out, in)
    b: np.ndarray
    activation: str = "relu"
    alpha: float = 0.2
    bn: BatchNorm | None = None

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W.shape[0]

    def params(self):
        out = [self.W, self.b]
        if self.bn is not None:
            out += [self.bn.gamma, self.bn.beta]
        return out


@dataclass
class DenseNet:
    layers: list
    mode: str = "train"

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def parameters(self) -> list:
        """Flat list [W0, b0, (gamma0, beta0), W1, ...]; backward returns grads in this order."""
        out = []
        for layer in self.layers:
            out += layer.params()
        return out

    def buffers(self) -> list:
        out = []
        for layer in self.layers:
            if layer.bn is not None:
                out += [layer.bn.running_mean, layer.bn.running_var]
        return out

    def copy(self) -> "DenseNet":
        return copy.deepcopy(self)

    def specs(self) -> list:
        return [LayerSpec(l.in_dim, l.out_dim, l.activation, l.alpha, l.bn is not None) for l in self.layers]


@dataclass
class Tape:
    net_id: int
    mode: str
    layer_cache: list = field(default_factory=list)
    output: np.ndarray | None = None


def _activate(a, kind, alpha):
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "leaky_relu":
        return np.where(a > 0, a, alpha * a)
    if kind == "sigmoid":
        return expit(a)
    return a


def _activation_grad(a, out, grad, kind, alpha):
    if kind == "relu":
        return grad * (a > 0)
    if kind == "leaky_relu":
        return grad * np.where(a > 0, 1.0, alpha)
    if kind == "sigmoid":
        return grad * out * (1.0 - out)
    return grad


def forward(net: DenseNet, batch, mode: str | None = None, update_stats: bool = True):
    """Run the net; returns (output, tape).

    In train mode batch norm uses batch statistics (biased variance) and, when
    ``update_stats``, folds them into the running estimates. Eval mode reads
    the running estimates and mutates nothing.
    """
    mode = mode or net.mode
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeMismatch(f"expected (M, {net.in_dim}) input, got {x.shape}")
    m = x.shape[0]
    tape = Tape(id(net), mode)
    for layer in net.layers:
        cache = {"x": x}
        z = x @ layer.W.T + layer.b
        a = z
        bn = layer.bn
        if bn is not None:
            if mode == "train":
                if m < 2:
                    raise BatchTooSmall("train-mode batch norm needs at least 2 samples")
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    bn.running_mean *= bn.momentum
                    bn.running_mean += (1.0 - bn.momentum) * mu
                    bn.running_var *= bn.momentum
                    bn.running_var += (1.0 - bn.momentum) * var * (m / (m - 1))
            else:
                mu, var = bn.running_mean, bn.running_var
            inv_std = 1.0 / np.sqrt(var + bn.eps)
            xhat = (z - mu) * inv_std
            a = bn.gamma * xhat + bn.beta
            cache.update(xhat=xhat, inv_std=inv_std)
        out = _activate(a, layer.activation, layer.alpha)
        cache.update(a=a, out=out)
        tape.layer_cache.append(cache)
        x = out
    tape.output = x
    return x, tape


def backward(net: DenseNet, tape: Tape, output_gradient, wrt_preactivation: bool = False,
             from_layer: int | None = None):
    """Exact gradients of a scalar loss given dL/d(output).

    With ``wrt_preactivation`` the supplied gradient is taken with respect to
    the last layer's pre-activation (used for numerically stable sigmoid
    losses). ``from_layer`` starts the pass at an inner layer's output; layers
    above it get zero gradients. Returns (parameter grads in
    ``net.parameters()`` order, dL/d(input)).
    """
    if tape.net_id != id(net) or len(tape.layer_cache) != len(net.layers):
        raise TapeMismatch("tape was not produced by this network")
    last = len(net.layers) - 1 if from_layer is None else from_layer % len(net.layers)
    g = np.asarray(output_gradient, dtype=np.float64)
    expected = tape.layer_cache[last]["out"].shape
    if g.shape != expected:
        raise ShapeMismatch(f"output gradient {g.shape} does not match layer output {expected}")
    grads = []
    for layer in net.layers[last + 1:]:
        grads += [np.zeros_like(p) for p in layer.params()]
    for k in range(last, -1, -1):
        layer, cache = net.layers[k], tape.layer_cache[k]
        if k == last and wrt_preactivation and from_layer is None:
            da = g
        else:
            da = _activation_grad(cache["a"], cache["out"], g, layer.activation, layer.alpha)
        bn = layer.bn
        layer_grads = []
        if bn is not None:
            xhat, inv_std = cache["xhat"], cache["inv_std"]
            dgamma = np.sum(da * xhat, axis=0)
            dbeta = np.sum(da, axis=0)
            dxhat = da * bn.gamma
            if tape.mode == "train":
                m = da.shape[0]
                dz = (inv_std / m) * (m * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
            else:
                dz = dxhat * inv_std
            layer_grads = [dgamma, dbeta]
        else:
            dz = da
        dW = dz.T @ cache["x"]
        db = dz.sum(axis=0)
        grads = [dW, db] + layer_grads + grads
        g = dz @ layer.W
    return grads, g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list | None = None
    v: list | None = None
    t: int = 0


def adam_step(params: list, grads: list, state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def init_net(specs, seed) -> DenseNet:
    """Uniform init: He scaling for (leaky) ReLU layers, Xavier otherwise; zero biases."""
    specs = list(specs)
    if not specs:
        raise InvalidSpec("network needs at least one layer")
    rng = np.random.default_rng(seed)
    layers = []
    prev = None
    for spec in specs:
        if isinstance(spec, dict):
            spec = LayerSpec(**spec)
        if spec.activation not in ACTIVATIONS:
            raise InvalidSpec(f"unknown activation {spec.activation!r}")
        if spec.in_dim < 1 or spec.out_dim < 1:
            raise InvalidSpec("layer dimensions must be positive")
        if prev is not None and spec.in_dim != prev:
            raise InvalidSpec(f"layer input {spec.in_dim} does not chain to previous output {prev}")
        if spec.activation in ("relu", "leaky_relu"):
            limit = np.sqrt(6.0 / spec.in_dim)
        else:
            limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        W = rng.uniform(-limit, limit, size=(spec.out_dim, spec.in_dim))
        bn = None
        if spec.batch_norm:
            d = spec.out_dim
            bn = BatchNorm(np.ones(d), np.zeros(d), np.zeros(d), np.ones(d))
        layers.append(Dense(W, np.zeros(spec.out_dim), spec.activation, spec.alpha, bn))
        prev = spec.out_dim
    return DenseNet(layers)


def mlp_specs(in_dim, hidden, n_hidden, out_dim, hidden_activation="relu", out_activation="linear",
              alpha=0.2, batch_norm=True) -> list:
    """Hidden layers get batch norm; the output layer never does."""
    specs = []
    d = in_dim
    for _ in range(n_hidden):
        specs.append(LayerSpec(d, hidden, hidden_activation, alpha, batch_norm))
        d = hidden
    specs.append(LayerSpec(d, out_dim, out_activation, alpha, False))
    return specs


def layer_arrays(net: DenseNet) -> dict:
    """Named arrays for serialization: parameters plus batch-norm running statistics."""
    out = {}
    for k, layer in enumerate(net.layers):
        out[f"L{k}.W"] = layer.W
        out[f"L{k}.b"] = layer.b
        if layer.bn is not None:
            out[f"L{k}.gamma"] = layer.bn.gamma
            out[f"L{k}.beta"] = layer.bn.beta
            out[f"L{k}.running_mean"] = layer.bn.running_mean
            out[f"L{k}.running_var"] = layer.bn.running_var
    return out


def net_from_arrays(specs: list, arrays: dict, prefix: str = "") -> DenseNet:
    layers = []
    for k, spec in enumerate(specs):
        if isinstance(spec, dict):
            spec = LayerSpec(**spec)
        key = f"{prefix}L{k}."
        bn = None
        if spec.batch_norm:
            bn = BatchNorm(arrays[key + "gamma"].copy(), arrays[key + "beta"].copy(),
                           arrays[key + "running_mean"].copy(), arrays[key + "running_var"].copy())
        W = arrays[key + "W"].reshape(spec.out_dim, spec.in_dim).copy()
        layers.append(Dense(W, arrays[key + "b"].copy(), spec.activation, spec.alpha, bn))
    return DenseNet(layers, mode="eval")
