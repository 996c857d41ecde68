"""From-scratch MLP with exact backpropagation, exposed as a LossFunction.

Parameters live in one flat vector: per layer, the weight matrix in row-major
order followed by the bias. The loss head is softmax cross-entropy (integer
labels) or mean squared error against one-hot targets; both are nonnegative
and mean-reduced over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError
from ..measures import LANE_INIT, SeededStream
from .base import LossFunction

ACTIVATIONS = ("relu", "tanh")
HEADS = ("softmax_ce", "mse")


@dataclass(frozen=True)
class MlpModel:
    """Architecture only; parameters are supplied per call."""

    layer_sizes: tuple[int, ...]   # input, hidden..., output
    activation: str = "relu"
    head: str = "softmax_ce"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")

    @property
    def param_count(self) -> int:
        sizes = self.layer_sizes
        return sum((fi + 1) * fo for fi, fo in zip(sizes[:-1], sizes[1:]))

    @property
    def num_outputs(self) -> int:
        return self.layer_sizes[-1]

    def init_params(self, stream: SeededStream) -> np.ndarray:
        """Uniform(-a, a) per layer with a = sqrt(6 / (fan_in + fan_out))."""
        gen = stream.at(component=LANE_INIT).generator()
        chunks = []
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            a = np.sqrt(6.0 / (fi + fo))
            chunks.append(gen.uniform(-a, a, size=fi * fo))
            chunks.append(np.zeros(fo))
        return np.concatenate(chunks)

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.param_count,):
            raise ValueError(
                f"expected {self.param_count} parameters, got {params.shape}")
        layers = []
        pos = 0
        for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = params[pos: pos + fi * fo].reshape(fi, fo)
            pos += fi * fo
            b = params[pos: pos + fo]
            pos += fo
            layers.append((w, b))
        return layers


def _activate(model: MlpModel, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if model.activation == "relu" else np.tanh(z)


def _activate_deriv(model: MlpModel, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0.0).astype(float) if model.activation == "relu" else 1.0 - a ** 2


def _forward(model: MlpModel, layers, features: np.ndarray):
    pre, post = [], [features]
    h = features
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        if k < len(layers) - 1:
            h = _activate(model, z)
        else:
            h = z  # linear output layer
        pre.append(z)
        post.append(h)
    return pre, post


def _head_loss_and_delta(model: MlpModel, logits: np.ndarray,
                         labels: np.ndarray) -> tuple[float, np.ndarray]:
    batch = logits.shape[0]
    onehot = np.zeros_like(logits)
    onehot[np.arange(batch), labels] = 1.0
    if model.head == "softmax_ce":
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(lse - shifted[np.arange(batch), labels]))
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        delta = (probs - onehot) / batch
    else:
        diff = logits - onehot
        loss = 0.5 * float(np.einsum("ij,ij->", diff, diff)) / batch
        delta = diff / batch
    return loss, delta


def mlp_loss_and_grad(model: MlpModel, params: np.ndarray, features: np.ndarray,
                      labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean batch loss and the exact flat gradient."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a nonempty 2-d feature array")
    if features.shape[1] != model.layer_sizes[0]:
        raise ValueError(
            f"features have {features.shape[1]} columns, model expects "
            f"{model.layer_sizes[0]}")
    layers = model.unpack(params)
    pre, post = _forward(model, layers, features)
    logits = post[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite activations in the forward pass")
    loss, delta = _head_loss_and_delta(model, logits, labels)

    grads = []
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        gw = post[k].T @ delta
        gb = delta.sum(axis=0)
        grads.append((gw, gb))
        if k > 0:
            upstream = delta @ w.T
            delta = upstream * _activate_deriv(model, pre[k - 1], post[k])
    grads.reverse()
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, flat


def mlp_forward_logits(model: MlpModel, params: np.ndarray,
                       features: np.ndarray) -> np.ndarray:
    layers = model.unpack(params)
    _, post = _forward(model, layers, np.asarray(features, dtype=float))
    return post[-1]


def mlp_accuracy(model: MlpModel, params: np.ndarray, features: np.ndarray,
                 labels: np.ndarray) -> float:
    logits = mlp_forward_logits(model, params, features)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


class MlpLoss(LossFunction):
    """Bind a model and a data batch; the parameter vector becomes x."""

    def __init__(self, model: MlpModel, features: np.ndarray, labels: np.ndarray):
        self.model = model
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels)
        self.dim = model.param_count

    def value(self, x):
        loss, _ = mlp_loss_and_grad(self.model, x, self.features, self.labels)
        return loss

    def grad(self, x):
        _, g = mlp_loss_and_grad(self.model, x, self.features, self.labels)
        return g

    def value_and_grad(self, x):
        return mlp_loss_and_grad(self.model, x, self.features, self.labels)
