"""Toy differentiable models over flat float64 parameter vectors.

Three model kinds, all operating on a single 1-d parameter vector so the
federated arithmetic (deltas, weighted averages, server steps) is plain
vector algebra:

* ``linear``   -- least-squares regression, squared-error loss.
* ``logistic`` -- softmax classification, cross-entropy loss.
* ``mlp``      -- one tanh hidden layer, softmax output, cross-entropy.

Flat parameter layout (row-major matrices):

* linear:    [w (input_dim), b (1)]
* logistic:  [W (input_dim x num_classes), b (num_classes)]
* mlp:       [W1 (input_dim x hidden_dim), b1 (hidden_dim),
              W2 (hidden_dim x num_classes), b2 (num_classes)]

Losses are means over the batch, so learning rates transfer across batch
sizes. Everything here is a pure function of its arguments.
"""

from dataclasses import dataclass

import numpy as np

from .rng import substream

__all__ = [
    "Example",
    "Batch",
    "ModelSpec",
    "param_count",
    "init_params",
    "loss",
    "gradient",
    "finite_diff_gradient",
    "predictions",
    "accuracy",
]

MODEL_KINDS = ("linear", "logistic", "mlp")


@dataclass(frozen=True)
class Example:
    """One labeled example: a feature vector and a scalar label.

    The label is a class index (int) for classifiers and a real value
    for regression.
    """

    features: np.ndarray
    label: float | int


@dataclass(frozen=True)
class Batch:
    """A stack of examples: features (m, d), labels (m,)."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_examples(cls, examples) -> "Batch":
        examples = list(examples)
        if not examples:
            raise ValueError("cannot build a Batch from zero examples")
        features = np.asarray([np.asarray(e.features, dtype=np.float64) for e in examples])
        if all(isinstance(e.label, (int, np.integer)) for e in examples):
            labels = np.asarray([e.label for e in examples], dtype=np.int64)
        else:
            labels = np.asarray([e.label for e in examples], dtype=np.float64)
        return cls(features, labels)

    def examples(self) -> list[Example]:
        return [
            Example(self.features[i].copy(), self.labels[i].item())
            for i in range(len(self))
        ]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    hidden_dim: int = 0
    num_classes: int = 1

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}, expected one of {MODEL_KINDS}")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.kind == "mlp":
            if self.hidden_dim < 1:
                raise ValueError(f"mlp needs hidden_dim >= 1, got {self.hidden_dim}")
        elif self.hidden_dim != 0:
            raise ValueError(f"hidden_dim must be 0 for kind {self.kind!r}, got {self.hidden_dim}")
        if self.kind == "linear":
            if self.num_classes != 1:
                raise ValueError(f"linear regression needs num_classes == 1, got {self.num_classes}")
        elif self.num_classes < 2:
            raise ValueError(f"{self.kind} needs num_classes >= 2, got {self.num_classes}")


def param_count(spec: ModelSpec) -> int:
    """Number of entries in the flat parameter vector for ``spec``."""
    if spec.kind == "mlp":
        return (
            spec.input_dim * spec.hidden_dim
            + spec.hidden_dim
            + spec.hidden_dim * spec.num_classes
            + spec.num_classes
        )
    return spec.input_dim * spec.num_classes + spec.num_classes


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Deterministic scaled-uniform initialization.

    Each layer draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), weights
    before biases, first layer first.
    """
    rng = substream(seed, "init")

    def layer(fan_in, n_weights, n_biases):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=n_weights + n_biases)

    if spec.kind == "mlp":
        first = layer(spec.input_dim, spec.input_dim * spec.hidden_dim, spec.hidden_dim)
        second = layer(spec.hidden_dim, spec.hidden_dim * spec.num_classes, spec.num_classes)
        return np.concatenate([first, second])
    return layer(spec.input_dim, spec.input_dim * spec.num_classes, spec.num_classes)


def _unpack(spec: ModelSpec, w: np.ndarray):
    d, c = spec.input_dim, spec.num_classes
    if spec.kind == "linear":
        return w[:d], w[d]
    if spec.kind == "logistic":
        return w[: d * c].reshape(d, c), w[d * c :]
    h = spec.hidden_dim
    i = 0
    w1 = w[i : i + d * h].reshape(d, h)
    i += d * h
    b1 = w[i : i + h]
    i += h
    w2 = w[i : i + h * c].reshape(h, c)
    i += h * c
    return w1, b1, w2, w[i:]


def _check(spec: ModelSpec, w: np.ndarray, batch: Batch) -> None:
    if w.shape != (param_count(spec),):
        raise ValueError(
            f"parameter vector has shape {w.shape}, expected ({param_count(spec)},) for {spec}"
        )
    if len(batch) == 0:
        raise ValueError("batch is empty")
    if batch.features.shape[1] != spec.input_dim:
        raise ValueError(
            f"batch features have dim {batch.features.shape[1]}, expected {spec.input_dim}"
        )


def _logits(spec: ModelSpec, w: np.ndarray, x: np.ndarray) -> np.ndarray:
    if spec.kind == "logistic":
        wm, b = _unpack(spec, w)
        return x @ wm + b
    w1, b1, w2, b2 = _unpack(spec, w)
    return np.tanh(x @ w1 + b1) @ w2 + b2


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    # log-sum-exp keeps large logits from overflowing
    shift = logits - logits.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def loss(spec: ModelSpec, w: np.ndarray, batch: Batch) -> float:
    """Mean per-example loss of ``w`` on ``batch``."""
    _check(spec, w, batch)
    if spec.kind == "linear":
        wv, b = _unpack(spec, w)
        r = batch.features @ wv + b - batch.labels
        return float(np.mean(r * r))
    logp = _log_softmax(_logits(spec, w, batch.features))
    idx = batch.labels.astype(np.int64)
    return float(-np.mean(logp[np.arange(len(batch)), idx]))


def gradient(spec: ModelSpec, w: np.ndarray, batch: Batch) -> np.ndarray:
    """Analytic gradient of :func:`loss` with respect to ``w``."""
    _check(spec, w, batch)
    x = batch.features
    m = len(batch)
    if spec.kind == "linear":
        wv, b = _unpack(spec, w)
        r = (x @ wv + b - batch.labels) * (2.0 / m)
        return np.concatenate([x.T @ r, [r.sum()]])

    idx = batch.labels.astype(np.int64)
    if spec.kind == "logistic":
        p = np.exp(_log_softmax(_logits(spec, w, x)))
        p[np.arange(m), idx] -= 1.0
        p /= m
        return np.concatenate([(x.T @ p).ravel(), p.sum(axis=0)])

    w1, b1, w2, b2 = _unpack(spec, w)
    h = np.tanh(x @ w1 + b1)
    p = np.exp(_log_softmax(h @ w2 + b2))
    p[np.arange(m), idx] -= 1.0
    p /= m
    d_hidden = (p @ w2.T) * (1.0 - h * h)
    return np.concatenate(
        [(x.T @ d_hidden).ravel(), d_hidden.sum(axis=0), (h.T @ p).ravel(), p.sum(axis=0)]
    )


def finite_diff_gradient(
    spec: ModelSpec, w: np.ndarray, batch: Batch, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient, one loss pair per coordinate.

    Test oracle for :func:`gradient`; O(dim) loss evaluations.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    out = np.empty_like(w)
    wp = w.copy()
    for i in range(w.shape[0]):
        wi = w[i]
        wp[i] = wi + h
        up = loss(spec, wp, batch)
        wp[i] = wi - h
        down = loss(spec, wp, batch)
        wp[i] = wi
        out[i] = (up - down) / (2.0 * h)
    return out


def predictions(spec: ModelSpec, w: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Point predictions: real values for linear, class indices otherwise."""
    if spec.kind == "linear":
        wv, b = _unpack(spec, w)
        return features @ wv + b
    return np.argmax(_logits(spec, w, features), axis=1)


def accuracy(spec: ModelSpec, w: np.ndarray, batch: Batch) -> float:
    """Fraction of correctly classified examples. Classifiers only."""
    if spec.kind == "linear":
        raise ValueError("accuracy is undefined for regression models")
    _check(spec, w, batch)
    pred = predictions(spec, w, batch.features)
    return float(np.mean(pred == batch.labels.astype(np.int64)))
