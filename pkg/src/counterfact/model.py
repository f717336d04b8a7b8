"""Feed-forward softmax classifier with exact input gradients.

The network maps a feature vector to a distribution over ordinal classes,
where class 1 is the best grade.  Besides the usual weight training, the
counterfactual solver needs the gradient of the cross-entropy with respect
to the *input*, which is what :func:`input_gradient` provides.

Weights are stored as ``(n_in, n_out)`` matrices so a forward pass is
``h @ W + b`` for both single rows and stacked batches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ContractError, DeserializationError, InvalidInputError
from .ingest import RatingScale, Scaler

SCHEMA_VERSION = 1
PROB_FLOOR = 1e-12
# keeps every returned probability strictly inside (0, 1)
_OUTPUT_GUARD = 1e-15

_ACTIVATIONS = ("relu", "tanh")


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MlpModel:
    """Immutable multilayer perceptron.

    ``layers`` is a tuple of ``(weights, bias)`` pairs.  Hidden layers use
    ``hidden_activation``; the last layer produces raw logits.  The
    optional metadata (feature names, scaler, rating scale) travels with
    the model file but does not affect the arithmetic: inputs to
    :func:`forward_probs` are already in model (standardized) units.
    """

    layers: tuple
    hidden_activation: str = "relu"
    feature_names: Optional[tuple] = None
    scaler: Optional[Scaler] = None
    rating_scale: Optional[RatingScale] = None

    def __post_init__(self):
        if self.hidden_activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation {self.hidden_activation!r}")
        if not self.layers:
            raise ContractError("model needs at least one layer")
        frozen = []
        for i, (w, b) in enumerate(self.layers):
            w, b = _frozen(w), _frozen(b)
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ContractError(f"layer {i}: weights {w.shape} incompatible with bias {b.shape}")
            if i > 0 and w.shape[0] != frozen[-1][0].shape[1]:
                raise ContractError(
                    f"layer {i}: input width {w.shape[0]} != previous output width {frozen[-1][0].shape[1]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ContractError(f"layer {i}: non-finite weights")
            frozen.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen))
        if self.n_classes < 2:
            raise ContractError("n_classes must be at least 2")
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != self.n_features:
                raise ContractError(f"{len(names)} feature names for {self.n_features} features")
            object.__setattr__(self, "feature_names", names)
        if self.scaler is not None and len(self.scaler.means) != self.n_features:
            raise ContractError("scaler width does not match n_features")

    @property
    def n_features(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    def standardize(self, rows):
        """Map original-unit rows to model units (identity without a scaler)."""
        rows = np.asarray(rows, dtype=np.float64)
        return rows if self.scaler is None else self.scaler.apply(rows)


@dataclass(frozen=True)
class TrainConfig:
    hidden_layer_sizes: tuple = (64, 64)
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    l2_weight_decay: float = 0.0
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layer_sizes", tuple(int(h) for h in self.hidden_layer_sizes))
        if any(h < 1 for h in self.hidden_layer_sizes):
            raise ContractError("hidden layer sizes must be positive")
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be >= 1")
        if self.l2_weight_decay < 0:
            raise ContractError("l2_weight_decay must be >= 0")


# --------------------------------------------------------------------------
# forward / backward


def _check_input(model: MlpModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != model.n_features:
        raise ContractError(f"expected {model.n_features} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("input contains non-finite values")
    return x


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _forward(model: MlpModel, x):
    """Return (logits, cache) where cache holds per-layer pre-activations and inputs."""
    h = x
    cache = []
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        z = h @ w + b
        cache.append((h, z))
        h = z if i == last else _activate(model.hidden_activation, z)
    return h, cache


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _backward(model: MlpModel, cache, dlogits, want_weights=False):
    """Backpropagate dL/dlogits.  Returns (dL/dx, weight grads or None)."""
    grads = [] if want_weights else None
    g = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        h_in, z = cache[i]
        if i != len(model.layers) - 1:
            if model.hidden_activation == "relu":
                g = g * (z > 0)
            else:
                g = g * (1.0 - np.tanh(z) ** 2)
        if want_weights:
            grads.append((h_in.T @ g, g.sum(axis=0)))
        g = g @ w.T
    if want_weights:
        grads.reverse()
    return g, grads


def logits(model: MlpModel, x):
    x = _check_input(model, x)
    return _forward(model, x)[0]


def forward_probs(model: MlpModel, x):
    """Softmax class distribution for one row (or each row of a 2-D batch)."""
    x = _check_input(model, x)
    p = _softmax(_forward(model, x)[0])
    p = np.maximum(p, _OUTPUT_GUARD)
    return p / p.sum(axis=-1, keepdims=True)


def class_from_probs(probs):
    """1-based argmax; ``np.argmax`` keeps the first maximum, i.e. the better grade."""
    probs = np.asarray(probs)
    return np.argmax(probs, axis=-1) + 1


def predict_class(model: MlpModel, x):
    c = class_from_probs(forward_probs(model, x))
    return int(c) if np.ndim(c) == 0 else c


def cross_entropy(probs, target) -> float:
    """``-sum(target * log(probs))`` with probabilities floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if probs.shape != target.shape:
        raise ContractError(f"length mismatch: probs {probs.shape} vs target {target.shape}")
    ce = -np.sum(target * np.log(np.maximum(probs, PROB_FLOOR)), axis=-1)
    return float(ce) if np.ndim(ce) == 0 else ce


def input_gradient(model: MlpModel, x, target):
    """Gradient of the cross-entropy with respect to the input features.

    Uses the softmax identity dCE/dlogits = p - target, so the result is
    exact wherever the target probability sits above the log floor.
    """
    x = _check_input(model, x)
    target = np.asarray(target, dtype=np.float64)
    if target.shape[-1] != model.n_classes:
        raise ContractError(f"target has {target.shape[-1]} entries, model has {model.n_classes} classes")
    z, cache = _forward(model, x)
    # target mass may not sum to one for a soft target; keep the general form
    p = _softmax(z)
    dlogits = p * target.sum(axis=-1, keepdims=True) - target
    gx, _ = _backward(model, cache, dlogits)
    return gx


def loss_and_input_gradient(model: MlpModel, x, target):
    """Cross-entropy (floored, as in :func:`cross_entropy`) and its input
    gradient from a single forward pass.  Works row-wise on 2-D input."""
    x = _check_input(model, x)
    target = np.asarray(target, dtype=np.float64)
    z, cache = _forward(model, x)
    p = _softmax(z)
    guarded = np.maximum(p, _OUTPUT_GUARD)
    guarded /= guarded.sum(axis=-1, keepdims=True)
    ce = -np.sum(target * np.log(np.maximum(guarded, PROB_FLOOR)), axis=-1)
    dlogits = p * target.sum(axis=-1, keepdims=True) - target
    gx, _ = _backward(model, cache, dlogits)
    return ce, gx


def one_hot(ordinal: int, n_classes: int):
    if not 1 <= ordinal <= n_classes:
        raise ContractError(f"ordinal {ordinal} outside 1..{n_classes}")
    t = np.zeros(n_classes)
    t[ordinal - 1] = 1.0
    return t


# --------------------------------------------------------------------------
# training


def _init_layers(sizes, activation, rng):
    gain = 6.0 if activation == "relu" else 3.0
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(gain / n_in)
        layers.append([rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out)])
    return layers


def mean_loss(model: MlpModel, features, labels) -> float:
    labels = np.asarray(labels, dtype=int)
    p = forward_probs(model, features)
    return float(-np.mean(np.log(np.maximum(p[np.arange(len(labels)), labels - 1], PROB_FLOOR))))


def train(config: TrainConfig, features, labels, n_classes: Optional[int] = None, *,
          feature_names=None, scaler=None, rating_scale=None) -> MlpModel:
    """Fit an MLP by mini-batch gradient descent on mean cross-entropy.

    ``labels`` are 1-based ordinals.  ``features`` must already be in model
    units; pass the scaler that produced them so it is saved with the model.
    The run is a pure function of its arguments, including ``config.seed``.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("training needs a non-empty 2-D feature matrix")
    if y.shape != (X.shape[0],):
        raise InvalidInputError(f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("training features contain non-finite values")
    if not np.all(np.equal(np.mod(y, 1), 0)):
        raise InvalidInputError("labels must be integer ordinals")
    y = y.astype(int)
    if n_classes is None:
        n_classes = int(y.max())
    if n_classes < 2:
        raise InvalidInputError("need at least two classes")
    if y.min() < 1 or y.max() > n_classes:
        raise InvalidInputError(f"labels must lie in 1..{n_classes}")
    missing = sorted(set(range(1, n_classes + 1)) - set(y.tolist()))
    if missing:
        raise InvalidInputError(f"no training samples for classes {missing}")

    rng = np.random.default_rng(config.seed)
    sizes = [X.shape[1], *config.hidden_layer_sizes, n_classes]
    params = _init_layers(sizes, config.hidden_activation, rng)
    Y = np.eye(n_classes)[y - 1]
    n = X.shape[0]
    lr, decay = config.learning_rate, config.l2_weight_decay

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            # unchecked construction: intermediate weights are known-good shapes
            net = _Scratch(params, config.hidden_activation)
            z, cache = _forward(net, X[idx])
            dlogits = (_softmax(z) - Y[idx]) / len(idx)
            _, grads = _backward(net, cache, dlogits, want_weights=True)
            for (w, b), (gw, gb) in zip(params, grads):
                if decay:
                    gw = gw + decay * w
                w -= lr * gw
                b -= lr * gb
        if not all(np.all(np.isfinite(w)) for w, _ in params):
            raise InvalidInputError("training diverged; lower learning_rate")

    return MlpModel(
        layers=tuple((w.copy(), b.copy()) for w, b in params),
        hidden_activation=config.hidden_activation,
        feature_names=feature_names,
        scaler=scaler,
        rating_scale=rating_scale,
    )


class _Scratch:
    """Mutable stand-in for MlpModel inside the training loop."""

    __slots__ = ("layers", "hidden_activation")

    def __init__(self, layers, activation):
        self.layers = layers
        self.hidden_activation = activation


# --------------------------------------------------------------------------
# persistence


def model_to_dict(model: MlpModel) -> dict:
    scaler = model.scaler
    return {
        "schema_version": SCHEMA_VERSION,
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "hidden_activation": model.hidden_activation,
        "layers": [{"weights": w.ravel().tolist(), "bias": b.tolist()} for w, b in model.layers],
        "feature_names": list(model.feature_names) if model.feature_names is not None else None,
        "scaler": None if scaler is None else {"means": scaler.means.tolist(), "stds": scaler.stds.tolist()},
        "rating_scale": list(model.rating_scale.symbols) if model.rating_scale is not None else None,
    }


def save_model(model: MlpModel, path) -> None:
    # float repr is the shortest string that round-trips, so loads are bit-exact
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1), encoding="utf-8")


def _require(doc, key, kind):
    if key not in doc:
        raise DeserializationError(f"missing field {key!r}", key)
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise DeserializationError(f"field {key!r} has wrong type {type(value).__name__}", key)
    return value


def model_from_dict(doc: dict) -> MlpModel:
    if not isinstance(doc, dict):
        raise DeserializationError("model document must be a JSON object")
    version = _require(doc, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise DeserializationError(f"schema_version {version} unsupported (expected {SCHEMA_VERSION})",
                                   "schema_version")
    n_features = _require(doc, "n_features", int)
    n_classes = _require(doc, "n_classes", int)
    activation = _require(doc, "hidden_activation", str)
    if activation not in _ACTIVATIONS:
        raise DeserializationError(f"unknown hidden_activation {activation!r}", "hidden_activation")
    raw_layers = _require(doc, "layers", list)
    if not raw_layers:
        raise DeserializationError("no layers", "layers")

    layers = []
    width = n_features
    for i, layer in enumerate(raw_layers):
        where = f"layers[{i}]"
        if not isinstance(layer, dict) or "weights" not in layer or "bias" not in layer:
            raise DeserializationError(f"{where} needs 'weights' and 'bias'", where)
        try:
            w = np.asarray(layer["weights"], dtype=np.float64)
            b = np.asarray(layer["bias"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise DeserializationError(f"{where}: non-numeric entries ({exc})", where) from None
        if w.ndim != 1 or b.ndim != 1 or b.size == 0:
            raise DeserializationError(f"{where}: weights and bias must be flat arrays", where)
        if w.size != width * b.size:
            raise DeserializationError(
                f"{where}.weights: {w.size} values, expected {width} x {b.size} = {width * b.size}",
                f"{where}.weights",
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DeserializationError(f"{where}: non-finite values", where)
        layers.append((w.reshape(width, b.size), b))
        width = b.size
    if width != n_classes:
        raise DeserializationError(f"last layer width {width} != n_classes {n_classes}", "n_classes")

    names = doc.get("feature_names")
    if names is not None and (not isinstance(names, list) or len(names) != n_features):
        raise DeserializationError("feature_names must list n_features names", "feature_names")
    scaler = None
    if doc.get("scaler") is not None:
        s = doc["scaler"]
        try:
            scaler = Scaler(np.asarray(s["means"], dtype=np.float64), np.asarray(s["stds"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise DeserializationError(f"bad scaler ({exc})", "scaler") from None
        if len(scaler.means) != n_features:
            raise DeserializationError("scaler width != n_features", "scaler")
    scale = None
    if doc.get("rating_scale") is not None:
        try:
            scale = RatingScale(tuple(doc["rating_scale"]))
        except (TypeError, ValueError) as exc:
            raise DeserializationError(f"bad rating_scale ({exc})", "rating_scale") from None
        if len(scale) != n_classes:
            raise DeserializationError(f"rating_scale has {len(scale)} symbols for {n_classes} classes",
                                       "rating_scale")
    return MlpModel(tuple(layers), activation, names, scaler, scale)


def load_model(path) -> MlpModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DeserializationError(f"cannot read model file {path}: {exc.strerror}", "path") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeserializationError(f"{path}: malformed JSON ({exc})", "document") from None
    return model_from_dict(doc)


def models_equal(a: MlpModel, b: MlpModel) -> bool:
    """Bitwise comparison of weights and metadata."""
    if a.hidden_activation != b.hidden_activation or len(a.layers) != len(b.layers):
        return False
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        if wa.tobytes() != wb.tobytes() or ba.tobytes() != bb.tobytes() or wa.shape != wb.shape:
            return False
    if a.feature_names != b.feature_names or a.rating_scale != b.rating_scale:
        return False
    if (a.scaler is None) != (b.scaler is None):
        return False
    if a.scaler is not None:
        if a.scaler.means.tobytes() != b.scaler.means.tobytes() or a.scaler.stds.tobytes() != b.scaler.stds.tobytes():
            return False
    return True
