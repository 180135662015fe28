"""Minimal dense softmax classifier with plain SGD and last-layer bookkeeping.

The model is a stack of dense layers with ReLU between them and softmax on the
output.  The final layer is the "ultimate" layer: its weight matrix has one
row per class, and the per-round change of that matrix (divided by the
negative learning rate) is the ultimate gradient that verifiers inspect.

Everything is float64 and pure: operations return new ``ModelParams`` and all
randomness comes from explicit seeds, so identical inputs give bit-identical
outputs.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import DomainError, NumericalError, ShapeError

__all__ = [
    "Layer",
    "ModelParams",
    "TrainConfig",
    "UltimateGradient",
    "init_mlp",
    "forward",
    "forward_batch",
    "loss",
    "gradients",
    "sgd_train",
    "extract_ultimate_gradient",
    "by_class_gradient",
    "lincomb",
    "flatten",
    "to_bytes",
    "from_bytes",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Layer:
    """One dense layer: ``weights`` is [out, in], ``bias`` is [out]."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("layer expects a weight matrix and a bias vector")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[0]} output rows"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise NumericalError("layer contains non-finite entries")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Ordered dense layers; the last one is the ultimate layer."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ShapeError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.in_dim != prev.out_dim:
                raise ShapeError(
                    f"layer input {nxt.in_dim} does not chain from previous "
                    f"output {prev.out_dim}"
                )

    @property
    def n_features(self) -> int:
        return self.layers[0].in_dim

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def ultimate(self):
        """Return (U, b) of the ultimate layer."""
        last = self.layers[-1]
        return last.weights, last.bias

    def same_architecture(self, other: "ModelParams") -> bool:
        return len(self.layers) == len(other.layers) and all(
            a.weights.shape == b.weights.shape for a, b in zip(self.layers, other.layers)
        )


@dataclass(frozen=True)
class TrainConfig:
    """Local SGD settings; ``seed`` fixes the batch shuffling."""

    learning_rate: float
    local_epochs: int = 1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise DomainError("learning_rate must be nonnegative")
        if self.local_epochs < 1:
            raise DomainError("local_epochs must be positive")
        if self.batch_size < 1:
            raise DomainError("batch_size must be positive")


@dataclass(frozen=True)
class UltimateGradient:
    """Reported per-round change of the ultimate layer, (dU, db) = -delta/lr."""

    du: np.ndarray
    db: np.ndarray
    client_id: int
    round_index: int

    def __post_init__(self):
        object.__setattr__(self, "du", _frozen(self.du))
        object.__setattr__(self, "db", _frozen(self.db))
        if self.du.ndim != 2 or self.db.ndim != 1:
            raise ShapeError("ultimate gradient expects a matrix and a vector")
        if self.du.shape[0] != self.db.shape[0]:
            raise ShapeError("dU row count must equal db length")
        if not (np.isfinite(self.du).all() and np.isfinite(self.db).all()):
            raise NumericalError("ultimate gradient contains non-finite entries")

    @property
    def n_classes(self) -> int:
        return self.du.shape[0]


def init_mlp(n_features: int, hidden_width: int, n_classes: int, seed: int) -> ModelParams:
    """Two-layer perceptron (features -> hidden ReLU -> classes), He-scaled init."""
    if min(n_features, hidden_width, n_classes) < 1:
        raise DomainError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    dims = [(hidden_width, n_features), (n_classes, hidden_width)]
    layers = []
    for out_dim, in_dim in dims:
        w = rng.standard_normal((out_dim, in_dim)) * np.sqrt(2.0 / in_dim)
        layers.append(Layer(w, np.zeros(out_dim)))
    return ModelParams(tuple(layers))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: ModelParams, x: np.ndarray):
    """Return (activations per layer incl. input, probabilities)."""
    acts = [x]
    h = x
    for i, layer in enumerate(model.layers):
        z = h @ layer.weights.T + layer.bias
        if i < len(model.layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            return acts, _softmax(z)
    raise AssertionError("unreachable")


def forward_batch(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch, shape [n, classes]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ShapeError(
            f"expected [n, {model.n_features}] inputs, got {x.shape}"
        )
    _, probs = _forward_cached(model, x)
    return probs


def forward(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise ShapeError(f"expected a length-{model.n_features} vector, got {x.shape}")
    return forward_batch(model, x[None, :])[0]


def loss(model: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the model on labeled samples."""
    y = np.asarray(y)
    if y.size == 0:
        raise DomainError("loss needs a nonempty sample set")
    probs = forward_batch(model, x)
    picked = probs[np.arange(y.size), y.astype(int)]
    # Probabilities can round to exactly zero for extreme logits.
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


def gradients(model: ModelParams, x: np.ndarray, y: np.ndarray):
    """Mean loss gradient per layer, as a list of ``Layer`` objects."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise DomainError("gradient needs a nonempty sample set")
    acts, probs = _forward_cached(model, x)
    n = y.size
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        grads[k] = Layer(delta.T @ acts[k], delta.sum(axis=0))
        if k > 0:
            delta = (delta @ model.layers[k].weights) * (acts[k] > 0.0)
    return grads


def sgd_train(model: ModelParams, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> ModelParams:
    """Run ``local_epochs`` passes of seeded mini-batch SGD and return the result.

    Batches are drawn without replacement from a fresh shuffle each epoch; a
    batch size larger than the dataset degrades to full-batch steps.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if y.size == 0:
        raise DomainError("training needs a nonempty sample set")
    rng = np.random.default_rng(cfg.seed)
    weights = [layer.weights.copy() for layer in model.layers]
    biases = [layer.bias.copy() for layer in model.layers]
    n = y.size
    step = min(cfg.batch_size, n)
    for epoch in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, step):
            batch = order[start : start + step]
            current = ModelParams(
                tuple(Layer(w, b) for w, b in zip(weights, biases))
            )
            grads = gradients(current, x[batch], y[batch])
            for k, g in enumerate(grads):
                weights[k] -= cfg.learning_rate * g.weights
                biases[k] -= cfg.learning_rate * g.bias
        for k in range(len(weights)):
            if not (np.isfinite(weights[k]).all() and np.isfinite(biases[k]).all()):
                raise NumericalError(
                    f"non-finite parameters after epoch {epoch} (layer {k})"
                )
    return ModelParams(tuple(Layer(w, b) for w, b in zip(weights, biases)))


def extract_ultimate_gradient(
    before: ModelParams, after: ModelParams, learning_rate: float, client_id: int = -1, round_index: int = 0
) -> UltimateGradient:
    """Recover (dU, db) from the ultimate-layer displacement over one round.

    By construction ``U_after == U_before - lr * dU`` exactly, so verifiers can
    reconstruct a client's ultimate weights from the public global model.
    """
    if learning_rate <= 0:
        raise DomainError("learning_rate must be positive to extract a gradient")
    if not before.same_architecture(after):
        raise ShapeError("models have different architectures")
    u0, b0 = before.ultimate()
    u1, b1 = after.ultimate()
    return UltimateGradient(
        (u1 - u0) / (-learning_rate),
        (b1 - b0) / (-learning_rate),
        client_id=client_id,
        round_index=round_index,
    )


def by_class_gradient(g: UltimateGradient) -> np.ndarray:
    """Per-class summary: row sums of dU concatenated with db, length 2*classes."""
    return np.concatenate([g.du.sum(axis=1), g.db])


def lincomb(models, coeffs) -> ModelParams:
    """Linear combination of identically shaped models, sum(c_i * m_i)."""
    models = list(models)
    coeffs = [float(c) for c in coeffs]
    if not models or len(models) != len(coeffs):
        raise DomainError("lincomb needs matching nonempty models and coefficients")
    first = models[0]
    for m in models[1:]:
        if not first.same_architecture(m):
            raise ShapeError("models have different architectures")
    layers = []
    for k in range(len(first.layers)):
        w = np.zeros_like(first.layers[k].weights)
        b = np.zeros_like(first.layers[k].bias)
        for c, m in zip(coeffs, models):
            w += c * m.layers[k].weights
            b += c * m.layers[k].bias
        layers.append(Layer(w, b))
    return ModelParams(tuple(layers))


def flatten(model: ModelParams) -> np.ndarray:
    """All parameters as one float64 vector (row-major, layer order)."""
    parts = []
    for layer in model.layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


# Canonical serialization: a fixed-width architecture header (layer count and
# per-layer dims, 32-bit little-endian unsigned) followed by row-major
# little-endian float64 payloads, weights then bias per layer.  Hashes of these
# bytes identify models in the off-chain store.

def to_bytes(model: ModelParams) -> bytes:
    out = [struct.pack("<I", len(model.layers))]
    for layer in model.layers:
        out.append(struct.pack("<II", layer.out_dim, layer.in_dim))
    for layer in model.layers:
        out.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(out)


def from_bytes(blob: bytes) -> ModelParams:
    try:
        (n_layers,) = struct.unpack_from("<I", blob, 0)
        offset = 4
        dims = []
        for _ in range(n_layers):
            out_dim, in_dim = struct.unpack_from("<II", blob, offset)
            dims.append((out_dim, in_dim))
            offset += 8
        layers = []
        for out_dim, in_dim in dims:
            w = np.frombuffer(blob, dtype="<f8", count=out_dim * in_dim, offset=offset)
            offset += 8 * out_dim * in_dim
            b = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=offset)
            offset += 8 * out_dim
            layers.append(Layer(w.reshape(out_dim, in_dim), b))
    except (struct.error, ValueError) as exc:
        raise ShapeError(f"malformed model serialization: {exc}") from exc
    if offset != len(blob):
        raise ShapeError("trailing bytes in model serialization")
    return ModelParams(tuple(layers))
