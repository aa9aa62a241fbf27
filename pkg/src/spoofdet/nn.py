"""Feed-forward classifier written directly against numpy.

Dense layers follow the ``x_j = b_j + sum_i y_i w_ij`` convention with the
weight matrix stored as (fan_out, fan_in).  The output head is a softmax
trained with cross-entropy; an L2 penalty applies to dense weights only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

MODEL_FORMAT_VERSION = 1
PROB_FLOOR = 1e-12


# ------------------------------------------------------------------- layers

class DenseLayer:
    kind = "dense"

    def __init__(self, weights: np.ndarray, biases: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.biases = np.asarray(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ShapeError(f"inconsistent dense shapes {self.weights.shape} / {self.biases.shape}")
        self._x: np.ndarray | None = None

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "biases": self.biases}

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._x = x
        return x @ self.weights.T + self.biases

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        grads = {"weights": grad.T @ self._x, "biases": grad.sum(axis=0)}
        return grad @ self.weights, grads


def init_xavier_normal(fan_in: int, fan_out: int, rng: np.random.Generator) -> DenseLayer:
    """Weights ~ N(0, 2/(fan_in + fan_out)), zero biases."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigError("fan sizes must be positive")
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return DenseLayer(rng.normal(0.0, std, (fan_out, fan_in)), np.zeros(fan_out))


class ReluLayer:
    kind = "relu"

    def __init__(self) -> None:
        self._mask: np.ndarray | None = None

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        return grad * self._mask, {}


class BatchNormLayer:
    """Per-feature normalization.

    Training mode normalizes with batch statistics (biased variance);
    inference uses running averages updated as
    ``running = momentum * running + (1 - momentum) * batch``.
    """

    kind = "batchnorm"

    def __init__(self, width: int, momentum: float = 0.99, epsilon: float = 1e-3):
        if not 0.0 < momentum < 1.0 or epsilon <= 0:
            raise ConfigError("batch norm needs momentum in (0, 1) and epsilon > 0")
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.momentum = momentum
        self.epsilon = epsilon
        self.update_running = False
        self._cache: tuple | None = None

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if not training:
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
            return self.gamma * xhat + self.beta
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mu) * inv_std
        self._cache = (xhat, inv_std)
        if self.update_running:
            m = self.momentum
            self.running_mean[:] = m * self.running_mean + (1 - m) * mu
            self.running_var[:] = m * self.running_var + (1 - m) * var
        return self.gamma * xhat + self.beta

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        xhat, inv_std = self._cache
        grads = {"gamma": (grad * xhat).sum(axis=0), "beta": grad.sum(axis=0)}
        g = grad * self.gamma
        dx = inv_std * (g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0))
        return dx, grads



def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


# -------------------------------------------------------------------- model

@dataclass
class MlpModel:
    """Ordered layers ending in a dense layer; softmax is applied on top.

    ``classes`` optionally maps output index to a label (ICAO addresses for
    the aircraft classifier); ``flags`` records feature settings the model
    was trained with.
    """

    layers: list
    classes: list[int] | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        dense = self.dense_layers()
        if not dense:
            raise ShapeError("model needs at least one dense layer")
        for a, b in zip(dense, dense[1:]):
            if a.fan_out != b.fan_in:
                raise ShapeError(f"dense layers do not chain: {a.fan_out} -> {b.fan_in}")
        if self.classes is not None and len(self.classes) != self.n_classes:
            raise ShapeError("class table size does not match the output width")

    def dense_layers(self) -> list[DenseLayer]:
        return [l for l in self.layers if isinstance(l, DenseLayer)]

    @property
    def input_dim(self) -> int:
        return self.dense_layers()[0].fan_in

    @property
    def n_classes(self) -> int:
        return self.dense_layers()[-1].fan_out

    def architecture(self) -> list[int]:
        dense = self.dense_layers()
        return [dense[0].fan_in] + [d.fan_out for d in dense]

    def parameters(self) -> list[tuple[int, str, np.ndarray]]:
        return [(i, name, arr) for i, layer in enumerate(self.layers) for name, arr in layer.params().items()]

    def logits(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected batch of width {self.input_dim}, got shape {x.shape}")
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward_from_logits(self, grad: np.ndarray) -> dict[tuple[int, str], np.ndarray]:
        grads: dict[tuple[int, str], np.ndarray] = {}
        for i in range(len(self.layers) - 1, -1, -1):
            grad, g = self.layers[i].backward(grad)
            for name, arr in g.items():
                grads[(i, name)] = arr
        return grads

    def copy_state(self) -> list[np.ndarray]:
        out = [arr.copy() for _, _, arr in self.parameters()]
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                out += [layer.running_mean.copy(), layer.running_var.copy()]
        return out

    def load_state(self, state: list[np.ndarray]) -> None:
        it = iter(state)
        for _, _, arr in self.parameters():
            arr[...] = next(it)
        for layer in self.layers:
            if isinstance(layer, BatchNormLayer):
                layer.running_mean[...] = next(it)
                layer.running_var[...] = next(it)


def forward(model: MlpModel, batch: np.ndarray, training_mode: bool = False) -> np.ndarray:
    """Class probabilities, one row per input."""
    return softmax(model.logits(batch, training_mode))


def predict(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Argmax class; ties go to the lowest index."""
    return np.argmax(forward(model, batch), axis=1)


def l2_penalty(model: MlpModel, l2: float) -> float:
    return l2 * sum(float(np.sum(d.weights ** 2)) for d in model.dense_layers())


def _data_loss(logits: np.ndarray, targets: np.ndarray) -> float:
    logp = np.maximum(log_softmax(logits), math.log(PROB_FLOOR))
    return float(-np.sum(targets * logp) / logits.shape[0])


def loss(model: MlpModel, batch: np.ndarray, one_hot_targets: np.ndarray, l2: float = 0.0,
         training_mode: bool = True) -> float:
    """Mean cross-entropy plus ``l2 * sum(w^2)`` over dense weights."""
    logits = model.logits(batch, training_mode)
    return _data_loss(logits, np.asarray(one_hot_targets, dtype=np.float64)) + l2_penalty(model, l2)


def backward(model: MlpModel, batch: np.ndarray, one_hot_targets: np.ndarray,
             l2: float = 0.0) -> tuple[float, dict[tuple[int, str], np.ndarray]]:
    """Training-mode loss and its exact gradient for every parameter.

    Gradients are keyed by (layer index, parameter name).
    """
    targets = np.asarray(one_hot_targets, dtype=np.float64)
    logits = model.logits(batch, training=True)
    value = _data_loss(logits, targets) + l2_penalty(model, l2)
    n = logits.shape[0]
    # d/dz of -sum t log softmax(z), for targets that sum to one per row
    grad = (softmax(logits) * targets.sum(axis=1, keepdims=True) - targets) / n
    grads = model.backward_from_logits(grad)
    if l2:
        for i, layer in enumerate(model.layers):
            if isinstance(layer, DenseLayer):
                grads[(i, "weights")] = grads[(i, "weights")] + 2.0 * l2 * layer.weights
    return value, grads


# --------------------------------------------------------------------- adam

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, t: int, config: "TrainConfig") -> None:
    """One bias-corrected Adam update, in place on ``params``."""
    if t < 1:
        raise ConfigError("Adam step counter starts at 1")
    b1, b2 = config.beta1, config.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for key, p in params.items():
        g = grads[key]
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
    state.t = t


# ----------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    l2_coefficient: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    balance_classes: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0 or self.l2_coefficient < 0:
            raise ConfigError("learning_rate must be positive and l2_coefficient non-negative")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    hidden: tuple[int, ...]
    batch_norm: bool = False
    epochs: int = 50
    stage: str = "message"

    def __post_init__(self) -> None:
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden sizes must be positive")


PRESETS = {
    "d1": ModelSpec("d1", (128,)),
    "d2": ModelSpec("d2", (256,)),
    "d3": ModelSpec("d3", (128, 128)),
    "m1": ModelSpec("m1", (512,), stage="aircraft"),
    "m2": ModelSpec("m2", (1024,), stage="aircraft"),
    "m3": ModelSpec("m3", (512, 512), stage="aircraft"),
    "m4": ModelSpec("m4", (512, 512, 512), stage="aircraft"),
    "m5": ModelSpec("m5", (512, 256), batch_norm=True, epochs=200, stage="aircraft"),
}


def get_preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def build_model(spec: ModelSpec | Sequence[int], input_dim: int, n_classes: int, rng: np.random.Generator,
                classes: list[int] | None = None, flags: dict | None = None,
                batch_norm: bool | None = None) -> MlpModel:
    """Dense stack with ReLU between layers (batch norm before ReLU if enabled)."""
    hidden = spec.hidden if isinstance(spec, ModelSpec) else tuple(spec)
    bn = spec.batch_norm if isinstance(spec, ModelSpec) else bool(batch_norm)
    widths = [input_dim, *hidden, n_classes]
    layers: list = []
    for k, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(init_xavier_normal(a, b, rng))
        if k < len(hidden):
            if bn:
                layers.append(BatchNormLayer(b))
            layers.append(ReluLayer())
    return MlpModel(layers, classes=classes, flags=dict(flags or {}))


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,train_accuracy,val_loss,val_accuracy"]
        for row in zip(self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy):
            rows.append(",".join(repr(v) for v in row))
        return "\n".join(rows) + "\n"


def one_hot(y: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((y.size, k))
    out[np.arange(y.size), y] = 1.0
    return out


def evaluate(model: MlpModel, X: np.ndarray, y: np.ndarray, batch: int = 4096) -> tuple[float, float]:
    """Inference-mode (mean cross-entropy, accuracy)."""
    total, correct = 0.0, 0
    for i in range(0, len(X), batch):
        logits = model.logits(X[i:i + batch])
        total += _data_loss(logits, one_hot(y[i:i + batch], model.n_classes)) * len(logits)
        correct += int(np.sum(np.argmax(logits, axis=1) == y[i:i + batch]))
    return total / len(X), correct / len(X)


def _balanced_order(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Oversample minority classes to the majority count, shuffled."""
    counts = np.bincount(y)
    top = counts.max()
    parts = [rng.choice(np.flatnonzero(y == c), top, replace=True) if n else np.empty(0, int)
             for c, n in enumerate(counts)]
    idx = np.concatenate(parts)
    return idx[rng.permutation(idx.size)]


def train(model: MlpModel, train_set: tuple[np.ndarray, np.ndarray], val_set: tuple[np.ndarray, np.ndarray],
          config: TrainConfig) -> History:
    """Mini-batch Adam; keeps the parameters of the best validation epoch.

    ``train_set`` and ``val_set`` are (features, integer class) pairs.
    """
    X, y = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=np.int64)
    Xv, yv = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=np.int64)
    if len(X) == 0 or len(Xv) == 0:
        raise ConfigError("training and validation sets must be non-empty")
    if y.max() >= model.n_classes or yv.max() >= model.n_classes:
        raise ShapeError("class index exceeds model output width")
    rng = np.random.default_rng(config.seed)
    params = {(i, n): a for i, n, a in model.parameters()}
    state = AdamState()
    bns = [l for l in model.layers if isinstance(l, BatchNormLayer)]
    hist = History()
    best_acc, best_state = -1.0, None
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = _balanced_order(y, rng) if config.balance_classes else rng.permutation(len(X))
        for layer in bns:
            layer.update_running = True
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            # a single-row batch has no batch statistics to normalize with
            if bns and idx.size < 2:
                continue
            _, grads = backward(model, X[idx], one_hot(y[idx], model.n_classes), config.l2_coefficient)
            step += 1
            adam_step(params, grads, state, step, config)
        for layer in bns:
            layer.update_running = False
        tr_loss, tr_acc = evaluate(model, X, y)
        va_loss, va_acc = evaluate(model, Xv, yv)
        hist.epoch.append(epoch)
        hist.train_loss.append(tr_loss)
        hist.train_accuracy.append(tr_acc)
        hist.val_loss.append(va_loss)
        hist.val_accuracy.append(va_acc)
        if va_acc > best_acc:
            best_acc, best_state, hist.best_epoch = va_acc, model.copy_state(), epoch
    model.load_state(best_state)
    return hist


# ------------------------------------------------------------ serialization

def _layer_record(layer) -> dict:
    if isinstance(layer, DenseLayer):
        return {"type": "dense", "weights": layer.weights.tolist(), "biases": layer.biases.tolist()}
    if isinstance(layer, BatchNormLayer):
        return {"type": "batchnorm", "momentum": layer.momentum, "epsilon": layer.epsilon,
                "gamma": layer.gamma.tolist(), "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(), "running_var": layer.running_var.tolist()}
    return {"type": "relu"}


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": "mlp",
        "version": MODEL_FORMAT_VERSION,
        "architecture": model.architecture(),
        "classes": model.classes,
        "flags": model.flags,
        "layers": [_layer_record(l) for l in model.layers],
    }


def model_from_dict(doc: dict) -> MlpModel:
    try:
        if doc.get("format") != "mlp" or doc.get("version") != MODEL_FORMAT_VERSION:
            raise FormatError("not a model artifact of a supported version")
        layers: list = []
        for rec in doc["layers"]:
            t = rec["type"]
            if t == "dense":
                w = np.array(rec["weights"], dtype=np.float64)
                layers.append(DenseLayer(w.reshape(len(rec["biases"]), -1) if w.size == 0 else w,
                                         np.array(rec["biases"], dtype=np.float64)))
            elif t == "batchnorm":
                bn = BatchNormLayer(len(rec["gamma"]), rec["momentum"], rec["epsilon"])
                for name in ("gamma", "beta", "running_mean", "running_var"):
                    arr = np.array(rec[name], dtype=np.float64)
                    if arr.shape != bn.gamma.shape:
                        raise FormatError(f"batch norm {name} has the wrong shape")
                    getattr(bn, name)[...] = arr
                layers.append(bn)
            elif t == "relu":
                layers.append(ReluLayer())
            else:
                raise FormatError(f"unknown layer type {t!r}")
        model = MlpModel(layers, classes=doc.get("classes"), flags=doc.get("flags") or {})
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed model artifact: {exc}") from exc
    if model.architecture() != doc.get("architecture"):
        raise FormatError("layer shapes do not match the recorded architecture")
    return model


def save_model(model: MlpModel, path: str | Path) -> None:
    """JSON text; floats are written with round-trip precision."""
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str | Path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("model artifact must be a JSON object")
    return model_from_dict(doc)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
