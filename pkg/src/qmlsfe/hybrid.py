"""QNN used as one differentiable layer inside a small classical network.

Stack: affine(n_features -> n_qubits) -> angle clamp x -> pi*sigmoid(x)
-> QNN expectation -> affine(1 -> 1) [-> sigmoid for classification].

The clamp keeps encoder angles inside (0, pi); without it the periodic
encoder makes large pre-layer outputs indistinguishable.  The pure QNN
(no classical layers) is the same stack with a frozen identity pre-layer,
no clamp and a frozen identity post-layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qnn
from .errors import ConfigurationError, ShapeError, TrainingError
from .featmap import FeatureMapSpec
from .qnn import AnsatzSpec, QnnModel

TASKS = ("regression", "classification")
PARAM_NAMES = ("pre.W", "pre.b", "qnn.theta", "post.W", "post.b")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


@dataclass
class AffineLayer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"bias shape {self.b.shape} does not match weight shape {self.W.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ConfigurationError("affine layer has non-finite entries")

    @classmethod
    def identity(cls, n: int) -> "AffineLayer":
        return cls(np.eye(n), np.zeros(n))

    def __call__(self, X):
        return np.asarray(X, dtype=float) @ self.W.T + self.b

    def to_dict(self):
        return {"W": self.W.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["W"], dtype=float), np.asarray(d["b"], dtype=float))


@dataclass
class HybridModel:
    pre: AffineLayer
    qnn: QnnModel
    post: AffineLayer
    task: str = "regression"
    clamp: bool = True
    frozen: frozenset = frozenset()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.pre.W.shape[0] != self.qnn.n_features:
            raise ShapeError(f"pre-layer emits {self.pre.W.shape[0]} values, QNN takes {self.qnn.n_features}")
        if self.post.W.shape != (1, 1):
            raise ShapeError(f"post-layer must be 1 -> 1, got weight shape {self.post.W.shape}")
        self.frozen = frozenset(self.frozen)
        unknown = set(self.frozen) - {"pre", "qnn", "post"}
        if unknown:
            raise ConfigurationError(f"unknown layer name(s) to freeze: {sorted(unknown)}")

    @property
    def n_features(self) -> int:
        return self.pre.W.shape[1]

    def get_params(self) -> dict:
        return {"pre.W": self.pre.W, "pre.b": self.pre.b, "qnn.theta": self.qnn.weights,
                "post.W": self.post.W, "post.b": self.post.b}

    def set_params(self, params: dict) -> None:
        self.pre = AffineLayer(params["pre.W"], params["pre.b"])
        self.qnn.weights = np.asarray(params["qnn.theta"], dtype=float)
        self.post = AffineLayer(params["post.W"], params["post.b"])

    def trainable(self, name: str) -> bool:
        return name.split(".")[0] not in self.frozen

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "clamp": self.clamp,
            "frozen": sorted(self.frozen),
            "pre": self.pre.to_dict(),
            "qnn": self.qnn.to_dict(),
            "post": self.post.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "HybridModel":
        return cls(AffineLayer.from_dict(d["pre"]), QnnModel.from_dict(d["qnn"]), AffineLayer.from_dict(d["post"]),
                   d["task"], bool(d["clamp"]), frozenset(d["frozen"]))


def build_hybrid(n_features: int, feature_map: FeatureMapSpec, ansatz: AnsatzSpec, task: str = "regression",
                 seed: int = 0) -> HybridModel:
    """Seeded initialisation: pre-layer U(+-1/sqrt(fan_in)), QNN weights U(-pi, pi), post-layer (1, 0)."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(n_features)
    n_q = feature_map.n_qubits
    pre = AffineLayer(rng.uniform(-bound, bound, (n_q, n_features)), rng.uniform(-bound, bound, n_q))
    model = QnnModel(feature_map, ansatz, qnn.init_weights(ansatz, rng))
    return HybridModel(pre, model, AffineLayer(np.ones((1, 1)), np.zeros(1)), task, clamp=True)


def build_pure_qnn(feature_map: FeatureMapSpec, ansatz: AnsatzSpec, task: str = "regression",
                   seed: int = 0) -> HybridModel:
    """QNN alone: inputs must already be angles; only the circuit weights train."""
    rng = np.random.default_rng(seed)
    n = feature_map.n_qubits
    model = QnnModel(feature_map, ansatz, qnn.init_weights(ansatz, rng))
    return HybridModel(AffineLayer.identity(n), model, AffineLayer(np.ones((1, 1)), np.zeros(1)), task,
                       clamp=False, frozen=frozenset({"pre", "post"}))


def _check_X(X, model: HybridModel) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return X


def _angles(Z, model):
    return math.pi * sigmoid(Z) if model.clamp else Z


def predict_raw(X, model: HybridModel) -> np.ndarray:
    """Post-layer output before any logistic squashing."""
    X = _check_X(X, model)
    q = qnn.forward_many(_angles(model.pre(X), model), model.qnn)
    return q * model.post.W[0, 0] + model.post.b[0]


def predict_many(X, model: HybridModel) -> np.ndarray:
    out = predict_raw(X, model)
    return sigmoid(out) if model.task == "classification" else out


def hybrid_forward(x, model: HybridModel) -> float:
    return float(predict_many(np.asarray(x, dtype=float)[None, :], model)[0])


def predict_labels(X, model: HybridModel) -> np.ndarray:
    """Class 1 when the logistic output is at least 0.5."""
    return (predict_raw(X, model) >= 0).astype(int)


def loss_value(X, y, model: HybridModel) -> float:
    out = predict_raw(X, model)
    y = np.asarray(y, dtype=float)
    if model.task == "classification":
        return float(np.mean(softplus(out) - y * out))
    return float(np.mean((out - y) ** 2))


def hybrid_backward(X, y, model: HybridModel):
    """Return ``(loss, grads)``; ``grads`` maps every name in PARAM_NAMES to an array.

    Regression uses mean squared error against targets already scaled to
    [-1, 1]; classification uses binary cross-entropy on the logistic output
    with 0/1 targets.
    """
    X = _check_X(X, model)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ConfigurationError("cannot back-propagate an empty batch")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"{y.shape} targets for {X.shape[0]} samples")
    N = X.shape[0]
    Z = model.pre(X)
    A = _angles(Z, model)
    need_inputs = model.trainable("pre")
    q, gq_theta, gq_x = qnn.value_and_grads(A, model.qnn, inputs=need_inputs)
    w_post, b_post = model.post.W[0, 0], model.post.b[0]
    out = q * w_post + b_post
    if model.task == "classification":
        loss = float(np.mean(softplus(out) - y * out))
        d_out = (sigmoid(out) - y) / N
    else:
        loss = float(np.mean((out - y) ** 2))
        d_out = 2.0 * (out - y) / N
    d_q = d_out * w_post
    grads = {
        "post.W": np.array([[np.sum(d_out * q)]]),
        "post.b": np.array([np.sum(d_out)]),
        "qnn.theta": d_q @ gq_theta,
    }
    if need_inputs and gq_x is not None:
        d_a = d_q[:, None] * gq_x
        if model.clamp:
            s = sigmoid(Z)
            d_z = d_a * math.pi * s * (1.0 - s)
        else:
            d_z = d_a
        grads["pre.W"] = d_z.T @ X
        grads["pre.b"] = d_z.sum(axis=0)
    else:
        grads["pre.W"] = np.zeros_like(model.pre.W)
        grads["pre.b"] = np.zeros_like(model.pre.b)
    for name in PARAM_NAMES:
        if not model.trainable(name):
            grads[name] = np.zeros_like(grads[name])
    return loss, grads


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be at least 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m.get(k, 0.0) + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v.get(k, 0.0) + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            out[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class Sgd:
    lr: float

    def step(self, params: dict, grads: dict) -> dict:
        return {k: p - self.lr * grads[k] for k, p in params.items()}


def train_hybrid(X, y, model: HybridModel, config: TrainConfig | None = None):
    """Full-batch gradient descent; returns ``(model, loss_history)``.

    The model is updated in place.  ``loss_history[e]`` is the loss before
    update ``e``; a non-finite loss or gradient raises TrainingError.
    """
    config = config or TrainConfig()
    X = _check_X(X, model)
    y = np.asarray(y, dtype=float)
    if config.optimizer == "adam":
        opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    else:
        opt = Sgd(config.learning_rate)
    history = []
    for epoch in range(config.epochs):
        loss, grads = hybrid_backward(X, y, model)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss or gradient at epoch {epoch}", epoch=epoch)
        history.append(loss)
        params = {k: v for k, v in model.get_params().items()}
        model.set_params(opt.step(params, grads))
    return model, history
