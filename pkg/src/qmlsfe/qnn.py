"""Estimator QNN: feature map, RY/CX ansatz, Z-string expectation.

The ansatz has ``reps + 1`` layers of RY rotations (one angle per qubit) with
a block of CX gates between consecutive layers.  Weight ``layer * n + q`` is
the RY angle on qubit ``q`` in ``layer``.

Gradients use the parameter-shift rule.  RY(w) = exp(-i w Y / 2) so the
weight shift is +-pi/2 with a factor 1/2.  The encoder terms are
exp(i a G) with G a Z-string, which needs a shift of +-pi/4 and no factor.
Input gradients then go through the chain rule of the angle functions,
summed over encoder repetitions.

Every evaluation here is batched: a shifted circuit is just another row in
the amplitude array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import featmap, qsim
from .errors import ConfigurationError, ShapeError
from .featmap import EntanglementPattern, FeatureMapSpec


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    reps: int = 1
    entanglement: EntanglementPattern = EntanglementPattern.FULL

    def __post_init__(self):
        if not isinstance(self.n_qubits, (int, np.integer)) or not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {qsim.MAX_QUBITS}], got {self.n_qubits!r}")
        if not isinstance(self.reps, (int, np.integer)) or self.reps < 1:
            raise ConfigurationError(f"reps must be an integer and at least 1, got {self.reps!r}")
        object.__setattr__(self, "entanglement", EntanglementPattern.parse(self.entanglement))

    @property
    def n_params(self) -> int:
        return self.n_qubits * (self.reps + 1)

    def pairs(self):
        return featmap.entanglement_pairs(self.n_qubits, self.entanglement)

    def to_dict(self) -> dict:
        return {"qubits": int(self.n_qubits), "reps": int(self.reps), "entanglement": self.entanglement.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AnsatzSpec":
        return cls(int(d["qubits"]), int(d["reps"]), EntanglementPattern.parse(d["entanglement"]))


def init_weights(spec: AnsatzSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-math.pi, math.pi, size=spec.n_params)


@dataclass
class QnnModel:
    """``feature_map=None`` skips encoding and starts the ansatz from ``|0...0>``."""

    feature_map: FeatureMapSpec | None
    ansatz: AnsatzSpec
    weights: np.ndarray
    observable: qsim.PauliZString | None = None
    _terms: list = field(init=False, repr=False, default=None)
    _signs: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.ansatz.n_params,):
            raise ShapeError(f"ansatz needs {self.ansatz.n_params} weights, got shape {self.weights.shape}")
        if self.observable is None:
            self.observable = qsim.PauliZString.all_z(self.ansatz.n_qubits)
        if self.observable.n_qubits != self.ansatz.n_qubits:
            raise ShapeError("observable and ansatz act on different registers")
        if self.feature_map is not None:
            if self.feature_map.n_qubits != self.ansatz.n_qubits:
                raise ShapeError("feature map and ansatz act on different registers")
            self._terms = featmap.encoding_terms(self.feature_map)
            self._signs = featmap.term_signs(self.n_qubits, self._terms)

    @property
    def n_qubits(self) -> int:
        return self.ansatz.n_qubits

    @property
    def n_features(self) -> int:
        return self.n_qubits

    def to_dict(self) -> dict:
        return {
            "feature_map": None if self.feature_map is None else self.feature_map.to_dict(),
            "ansatz": self.ansatz.to_dict(),
            "weights": [float(w) for w in self.weights],
            "observable": sorted(self.observable.support),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QnnModel":
        ansatz = AnsatzSpec.from_dict(d["ansatz"])
        fm = None if d["feature_map"] is None else FeatureMapSpec.from_dict(d["feature_map"])
        obs = qsim.PauliZString(ansatz.n_qubits, frozenset(d["observable"]))
        return cls(fm, ansatz, np.asarray(d["weights"], dtype=float), obs)


def _ansatz_amps(amps: np.ndarray, theta: np.ndarray, spec: AnsatzSpec) -> np.ndarray:
    """Apply the ansatz to ``amps`` of shape (..., 2**n) with ``theta`` of shape (..., n_params)."""
    n = spec.n_qubits
    pairs = spec.pairs()
    for layer in range(spec.reps + 1):
        if layer:
            for c, t in pairs:
                amps = qsim._cx(amps, n, c, t)
        for q in range(n):
            amps = qsim._ry(amps, n, q, theta[..., layer * n + q])
    return amps


def ansatz_apply(state: qsim.StateVector, theta, spec: AnsatzSpec) -> qsim.StateVector:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.n_params,):
        raise ShapeError(f"ansatz needs {spec.n_params} angles, got shape {theta.shape}")
    if state.n_qubits != spec.n_qubits:
        raise ShapeError(f"ansatz on {spec.n_qubits} qubits applied to a {state.n_qubits}-qubit state")
    return qsim.StateVector(state.n_qubits, _ansatz_amps(state.amplitudes, theta, spec))


def _check_x(x, model: QnnModel) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.n_features,):
        raise ShapeError(f"expected {model.n_features} features, got shape {x.shape}")
    return x


def _encoder_angles(X: np.ndarray, model: QnnModel) -> np.ndarray:
    """(m, reps, n_terms) encoder term angles."""
    fm = model.feature_map
    angles = np.stack([featmap.term_angles(x, model._terms) for x in X])
    return np.repeat(angles[:, None, :], fm.reps, axis=1)


def _evaluate(enc_angles, theta, model: QnnModel) -> np.ndarray:
    """Expectations for a batch; ``enc_angles`` (B, reps, T) or None, ``theta`` (B, P)."""
    n = model.n_qubits
    if model.feature_map is None:
        amps = np.zeros((theta.shape[0], 1 << n), dtype=np.complex128)
        amps[:, 0] = 1.0
    else:
        amps = featmap.encode_amplitudes(enc_angles, n, model._signs)
    amps = _ansatz_amps(amps, theta, model.ansatz)
    return qsim._expect_z(amps, n, tuple(sorted(model.observable.support)))


def forward_many(X, model: QnnModel) -> np.ndarray:
    X = _check_x(np.atleast_2d(X), model)
    theta = np.broadcast_to(model.weights, (X.shape[0], model.ansatz.n_params))
    enc = None if model.feature_map is None else _encoder_angles(X, model)
    return _evaluate(enc, theta, model)


def qnn_forward(x, model: QnnModel) -> float:
    x = _check_x(x, model)
    return float(forward_many(x[None, :], model)[0])


def _angle_jacobian(x: np.ndarray, terms) -> np.ndarray:
    """d(term angle)/dx, shape (T, n)."""
    J = np.zeros((len(terms), x.shape[0]))
    for k, t in enumerate(terms):
        if len(t) == 1:
            J[k, t[0]] = 1.0
        else:
            i, j = t
            J[k, i] += -(math.pi - x[j])
            J[k, j] += -(math.pi - x[i])
    return J


def value_and_grads(X, model: QnnModel, inputs: bool = True):
    """Forward values and parameter-shift gradients for every row of ``X``.

    Returns ``(f, df/dtheta, df/dx)`` with shapes (m,), (m, P), (m, n).
    ``df/dx`` is None when ``inputs`` is false or there is no feature map.
    """
    X = _check_x(np.atleast_2d(X), model)
    m = X.shape[0]
    P = model.ansatz.n_params
    w = model.weights
    # rows per sample: base, +shift per weight, -shift per weight, then encoder shifts
    eye = np.eye(P) * (math.pi / 2)
    theta_rows = np.concatenate([w[None, :], w + eye, w - eye])
    n_w = theta_rows.shape[0]

    fm = model.feature_map
    if fm is None:
        vals = _evaluate(None, np.tile(theta_rows, (m, 1)), model).reshape(m, n_w)
        f = vals[:, 0]
        gw = (vals[:, 1:1 + P] - vals[:, 1 + P:]) / 2.0
        return f, gw, None

    enc = _encoder_angles(X, model)  # (m, R, T)
    R, T = enc.shape[1], enc.shape[2]
    blocks_enc = [np.repeat(enc[:, None], n_w, axis=1)]
    blocks_theta = [np.broadcast_to(theta_rows, (m, n_w, P))]
    n_e = 0
    if inputs:
        shift = np.zeros((2 * R * T, R, T))
        for r in range(R):
            for k in range(T):
                idx = r * T + k
                shift[idx, r, k] = math.pi / 4
                shift[R * T + idx, r, k] = -math.pi / 4
        n_e = shift.shape[0]
        blocks_enc.append(enc[:, None] + shift[None])
        blocks_theta.append(np.broadcast_to(w, (m, n_e, P)))
    enc_all = np.concatenate(blocks_enc, axis=1).reshape(-1, R, T)
    theta_all = np.concatenate(blocks_theta, axis=1).reshape(-1, P)
    vals = _evaluate(enc_all, theta_all, model).reshape(m, n_w + n_e)
    f = vals[:, 0]
    gw = (vals[:, 1:1 + P] - vals[:, 1 + P:n_w]) / 2.0
    if not inputs:
        return f, gw, None
    d_angle = (vals[:, n_w:n_w + R * T] - vals[:, n_w + R * T:]).reshape(m, R, T).sum(axis=1)
    gx = np.stack([d_angle[i] @ _angle_jacobian(X[i], model._terms) for i in range(m)])
    return f, gw, gx


def grad_weights(x, model: QnnModel) -> np.ndarray:
    x = _check_x(x, model)
    return value_and_grads(x[None, :], model, inputs=False)[1][0]


def grad_inputs(x, model: QnnModel) -> np.ndarray:
    x = _check_x(x, model)
    if model.feature_map is None:
        return np.zeros(model.n_features)
    return value_and_grads(x[None, :], model, inputs=True)[2][0]
