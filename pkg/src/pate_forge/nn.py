"""A small dense-network engine with analytic gradients, losses and optimizers.

Weights are stored as ``(input_dim, output_dim)`` matrices and a layer
computes ``act(x @ W + b)`` on row-major batches. Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import NumericalError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
BCE_CLAMP = 1e-7
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def mlp_specs(sizes: Sequence[int], hidden="relu", output="identity") -> list[LayerSpec]:
    """``[d, h1, ..., out]`` -> layer specs with ``hidden`` between and ``output`` last."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    specs = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        specs.append(LayerSpec(int(a), int(b), output if i == len(sizes) - 2 else hidden))
    return specs


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return x
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    return sigmoid(x)


def _activation_grad(kind: str, out: np.ndarray) -> np.ndarray | None:
    """Derivative expressed through the layer output; ``None`` means 1."""
    if kind == "identity":
        return None
    if kind == "relu":
        return (out > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - out * out
    return out * (1.0 - out)


class DenseNet:
    def __init__(self, specs: Sequence[LayerSpec], weights, biases):
        specs = list(specs)
        if not specs:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(specs[:-1], specs[1:]):
            if prev.output_dim != nxt.input_dim:
                raise ValueError(f"layer dims do not chain: {prev} -> {nxt}")
        self.specs = specs
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for spec, w, b in zip(specs, self.weights, self.biases, strict=True):
            if w.shape != (spec.input_dim, spec.output_dim) or b.shape != (spec.output_dim,):
                raise ValueError(f"parameter shapes do not match {spec}")

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def parameters(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]``; the arrays are live references."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def copy(self) -> "DenseNet":
        return DenseNet(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, batch) -> list[np.ndarray]:
        """Return ``[input, layer1 output, ..., final output]``."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected input dim {self.input_dim}, got {x.shape[-1]}")
        acts = [x]
        for spec, w, b in zip(self.specs, self.weights, self.biases):
            x = _activate(spec.activation, x @ w + b)
            acts.append(x)
        return acts

    def __call__(self, batch) -> np.ndarray:
        return self.forward(batch)[-1]

    def backward(self, activations, output_gradient) -> tuple[list[np.ndarray], np.ndarray]:
        """Backpropagate ``dL/d(output)``.

        Returns parameter gradients in ``parameters()`` order and ``dL/d(input)``.
        """
        if len(activations) != len(self.specs) + 1:
            raise ValueError("activations do not come from this network")
        grad = np.asarray(output_gradient, dtype=np.float64)
        if grad.shape != activations[-1].shape:
            raise ValueError(f"output gradient shape {grad.shape} != {activations[-1].shape}")
        grads: list[np.ndarray] = []
        for layer in range(len(self.specs) - 1, -1, -1):
            local = _activation_grad(self.specs[layer].activation, activations[layer + 1])
            if local is not None:
                grad = grad * local
            grads.append(grad.sum(axis=0))
            grads.append(activations[layer].T @ grad)
            grad = grad @ self.weights[layer].T
        grads.reverse()
        return grads, grad


def init_net(specs: Sequence[LayerSpec], seed: int | np.random.Generator) -> DenseNet:
    """Glorot-uniform weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return DenseNet(specs, weights, biases)


def predict_labels(net: DenseNet, features) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(net(features), axis=1)


# --- losses ------------------------------------------------------------------
# Each returns (loss, dL/d(prediction)). Batched losses average over rows unless
# reduction="sum".


def _reduce(per_sample: np.ndarray, reduction: str) -> tuple[float, float]:
    if reduction == "mean":
        return float(per_sample.mean()), 1.0 / per_sample.shape[0]
    if reduction == "sum":
        return float(per_sample.sum()), 1.0
    raise ValueError(f"unknown reduction {reduction!r}")


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels, reduction="mean"):
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.shape != (z.shape[0],):
        raise ValueError("one label per row of logits is required")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError(f"labels must lie in [0, {z.shape[1]})")
    rows = np.arange(z.shape[0])
    per_sample = -log_softmax(z)[rows, y]
    loss, scale = _reduce(per_sample, reduction)
    grad = softmax(z)
    grad[rows, y] -= 1.0
    grad *= scale
    return loss, (grad[0] if single else grad)


def binary_cross_entropy(prediction, target, reduction="mean"):
    """BCE on probabilities clamped to ``[1e-7, 1 - 1e-7]``.

    The gradient is taken at the clamped value (the clamp itself is treated as
    identity), which keeps it finite for saturated sigmoid outputs.
    """
    p = np.clip(np.asarray(prediction, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    per_element = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    if p.ndim == 0:
        return float(per_element), (p - t) / (p * (1.0 - p))
    per_sample = per_element.reshape(p.shape[0], -1).sum(axis=1)
    loss, scale = _reduce(per_sample, reduction)
    return loss, scale * (p - t) / (p * (1.0 - p))


def gaussian_nll_reconstruction(x, x_hat, reduction="mean"):
    """Unit-variance Gaussian decoder NLL without constants: ``0.5 * ||x - x_hat||^2``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    if diff.ndim == 1:
        return 0.5 * float(diff @ diff), diff
    per_sample = 0.5 * np.sum(diff * diff, axis=1)
    loss, scale = _reduce(per_sample, reduction)
    return loss, scale * diff


# --- optimizers ----------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: Literal["sgd", "adam"]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moments: list = field(default_factory=list)
    second_moments: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")


def make_optimizer(kind: str, learning_rate: float, net: DenseNet | None = None) -> OptimizerState:
    state = OptimizerState(kind, float(learning_rate))
    if net is not None and kind == "adam":
        state.first_moments = [np.zeros_like(p) for p in net.parameters()]
        state.second_moments = [np.zeros_like(p) for p in net.parameters()]
    return state


def optimizer_step(state: OptimizerState, net: DenseNet, gradients: Sequence[np.ndarray]) -> DenseNet:
    """Update ``net`` in place and return it."""
    params = net.parameters()
    if len(gradients) != len(params):
        raise ValueError("gradient list does not match the network")
    for p, g in zip(params, gradients):
        if p.shape != g.shape:
            raise ValueError("gradient shapes do not match parameter shapes")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")
    state.step_count += 1
    if state.kind == "sgd":
        for p, g in zip(params, gradients):
            p -= state.learning_rate * g
        return net
    if not state.first_moments:
        state.first_moments = [np.zeros_like(p) for p in params]
        state.second_moments = [np.zeros_like(p) for p in params]
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, gradients, state.first_moments, state.second_moments):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return net


# --- classifier training -------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.01
    epochs: int = 30
    batch_size: int = 32

    def validate(self) -> None:
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("need epochs >= 0 and batch_size >= 1")


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def fit_classifier(
    features, labels, num_classes: int, hidden: Sequence[int], config: TrainConfig, seed: int
) -> DenseNet:
    """Softmax classifier trained with minibatch cross-entropy."""
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] == 0:
        raise ValueError("cannot train on an empty set")
    rng = np.random.default_rng(seed)
    net = init_net(mlp_specs([features.shape[1], *hidden, num_classes]), rng)
    opt = make_optimizer(config.optimizer, config.learning_rate, net)
    for _ in range(config.epochs):
        for idx in minibatches(features.shape[0], config.batch_size, rng):
            acts = net.forward(features[idx])
            _, grad = softmax_cross_entropy(acts[-1], labels[idx])
            grads, _ = net.backward(acts, grad)
            optimizer_step(opt, net, grads)
    return net


# --- checkpoints ---------------------------------------------------------------


def net_to_dict(net: DenseNet) -> dict:
    return {
        "layers": [
            {"input_dim": s.input_dim, "output_dim": s.output_dim, "activation": s.activation}
            for s in net.specs
        ],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(doc: dict) -> DenseNet:
    specs = [LayerSpec(**layer) for layer in doc["layers"]]
    weights = [np.array(w, dtype=np.float64).reshape(s.input_dim, s.output_dim) for w, s in zip(doc["weights"], specs)]
    return DenseNet(specs, weights, [np.array(b, dtype=np.float64) for b in doc["biases"]])


def optimizer_to_dict(state: OptimizerState) -> dict:
    return {
        "kind": state.kind,
        "learning_rate": state.learning_rate,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "eps": state.eps,
        "step_count": state.step_count,
        "first_moments": [m.tolist() for m in state.first_moments],
        "second_moments": [v.tolist() for v in state.second_moments],
    }


def optimizer_from_dict(doc: dict) -> OptimizerState:
    state = OptimizerState(
        doc["kind"], doc["learning_rate"], doc["beta1"], doc["beta2"], doc["eps"], doc["step_count"]
    )
    state.first_moments = [np.array(m, dtype=np.float64) for m in doc["first_moments"]]
    state.second_moments = [np.array(v, dtype=np.float64) for v in doc["second_moments"]]
    return state


def checkpoint_document(nets: dict[str, DenseNet], optimizers: dict[str, OptimizerState] | None = None, **extra) -> dict:
    doc = {"format_version": CHECKPOINT_VERSION}
    doc.update(extra)
    doc["networks"] = {name: net_to_dict(net) for name, net in nets.items()}
    doc["optimizers"] = {name: optimizer_to_dict(s) for name, s in (optimizers or {}).items()}
    return doc


def save_checkpoint(path, nets: dict[str, DenseNet], optimizers=None, **extra) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(checkpoint_document(nets, optimizers, **extra), fh)


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict[str, OptimizerState], dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    nets = {name: net_from_dict(d) for name, d in doc["networks"].items()}
    opts = {name: optimizer_from_dict(d) for name, d in doc.get("optimizers", {}).items()}
    return nets, opts, doc
