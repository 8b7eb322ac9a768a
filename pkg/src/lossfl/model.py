"""Numerical core: softmax regression / one-hidden-layer MLP on flat parameters.

Parameters travel as flat float64 arrays (the unit that is packetized,
uploaded and aggregated).  Layout for ``logistic``: the ``features x classes``
weight matrix in row-major order followed by the ``classes`` bias.  Layout for
``mlp``: W1 (features x hidden), b1, W2 (hidden x classes), b2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Purpose, stream


class DivergenceError(FloatingPointError):
    """Raised when training produces a non-finite loss or parameters."""


@dataclass(frozen=True)
class ModelSpec:
    features: int = 60
    classes: int = 10
    kind: str = "logistic"
    hidden_units: int = 20

    def __post_init__(self):
        if self.features < 1:
            raise ValueError("features must be >= 1")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if self.kind not in ("logistic", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "mlp" and self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")

    @property
    def dim(self) -> int:
        if self.kind == "logistic":
            return (self.features + 1) * self.classes
        h = self.hidden_units
        return (self.features + 1) * h + (h + 1) * self.classes


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int = 10

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.local_epochs < 1:
            raise ValueError("E must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ClientDataset:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def __post_init__(self):
        if len(self.train_y) < 1 or len(self.test_y) < 1:
            raise ValueError("client needs at least one train and one test sample")
        if len(self.train_x) != len(self.train_y) or len(self.test_x) != len(self.test_y):
            raise ValueError("feature/label length mismatch")

    @property
    def n_train(self) -> int:
        return len(self.train_y)

    @property
    def n_test(self) -> int:
        return len(self.test_y)


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """Zeros for logistic regression; seeded Glorot-uniform for the MLP."""
    if spec.kind == "logistic":
        return np.zeros(spec.dim)
    rng = stream(seed, Purpose.INIT)
    f, h, c = spec.features, spec.hidden_units, spec.classes
    a1 = np.sqrt(6.0 / (f + h))
    a2 = np.sqrt(6.0 / (h + c))
    return np.concatenate([
        rng.uniform(-a1, a1, f * h), np.zeros(h),
        rng.uniform(-a2, a2, h * c), np.zeros(c),
    ])


def _unpack(params: np.ndarray, spec: ModelSpec):
    f, c = spec.features, spec.classes
    if params.shape != (spec.dim,):
        raise ValueError(f"parameter vector has shape {params.shape}, expected ({spec.dim},)")
    if spec.kind == "logistic":
        return params[: f * c].reshape(f, c), params[f * c:]
    h = spec.hidden_units
    o = 0
    w1 = params[o:o + f * h].reshape(f, h); o += f * h
    b1 = params[o:o + h]; o += h
    w2 = params[o:o + h * c].reshape(h, c); o += h * c
    return w1, b1, w2, params[o:]


def logits(params: np.ndarray, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    parts = _unpack(params, spec)
    if spec.kind == "logistic":
        w, b = parts
        return x @ w + b
    w1, b1, w2, b2 = parts
    return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2


def _cross_entropy(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and d(loss)/d(logits)."""
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    s = ez.sum(axis=1, keepdims=True)
    n = len(y)
    rows = np.arange(n)
    loss = float(np.mean(np.log(s[:, 0]) - z[rows, y]))
    p = ez / s
    p[rows, y] -= 1.0
    return loss, p / n


def loss_and_grad(params: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``(x, y)`` and its gradient w.r.t. the flat params."""
    parts = _unpack(params, spec)
    if spec.kind == "logistic":
        w, b = parts
        loss, dz = _cross_entropy(x @ w + b, y)
        return loss, np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0)])
    w1, b1, w2, b2 = parts
    pre = x @ w1 + b1
    hid = np.maximum(pre, 0.0)
    loss, dz = _cross_entropy(hid @ w2 + b2, y)
    dhid = (dz @ w2.T) * (pre > 0)
    return loss, np.concatenate([
        (x.T @ dhid).ravel(), dhid.sum(axis=0), (hid.T @ dz).ravel(), dz.sum(axis=0),
    ])


def loss(params: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> float:
    z = logits(params, spec, x)
    z = z - z.max(axis=1, keepdims=True)
    return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(y)), y]))


def _check_finite(value, params, what: str):
    if not np.isfinite(value) or not np.all(np.isfinite(params)):
        raise DivergenceError(f"non-finite {what}; learning rate too large?")


def local_train(
    params: np.ndarray,
    data: ClientDataset,
    hyper: TrainHyper,
    rng: np.random.Generator,
    spec: ModelSpec,
) -> tuple[np.ndarray, float]:
    """Run ``E`` epochs of shuffled mini-batch SGD.

    Returns the trained parameters and the training loss evaluated at the
    *input* parameters (the round-start loss that q-FedAvg weights by).
    """
    start_loss = loss(params, spec, data.train_x, data.train_y)
    _check_finite(start_loss, params, "starting loss")
    w = params.copy()
    n, bs, lr = data.n_train, hyper.batch_size, hyper.learning_rate
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            _, g = loss_and_grad(w, spec, data.train_x[idx], data.train_y[idx])
            w -= lr * g
    _check_finite(0.0, w, "parameters after local training")
    return w, start_loss


def evaluate(params: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Accuracy in [0, 1] and mean cross-entropy.  Argmax ties go to the lowest class."""
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty set")
    z = logits(params, spec, x)
    acc = float(np.mean(np.argmax(z, axis=1) == y))
    z = z - z.max(axis=1, keepdims=True)
    ce = float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(y)), y]))
    return acc, ce


def correct_counts(params: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Number of correct predictions per contiguous segment ``offsets[i]:offsets[i+1]``."""
    hit = (np.argmax(logits(params, spec, x), axis=1) == y).astype(np.int64)
    return np.add.reduceat(hit, offsets[:-1]) if len(hit) else np.zeros(len(offsets) - 1, dtype=np.int64)
