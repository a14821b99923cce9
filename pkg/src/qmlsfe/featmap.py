"""Entangled Z/ZZ data-encoding map.

One repetition applies H to every qubit followed by the diagonal unitary

    exp(i * [sum_i x_i Z_i + sum_{(i,j) in pairs} (pi - x_i)(pi - x_j) Z_i Z_j])

and the whole block is repeated ``reps`` times starting from ``|0...0>``.
The exponent is used exactly as written, without the factor of 2 that some
SDK implementations put on their rotation angles, so kernels computed here
do not match those SDKs number for number.

All terms commute, so the diagonal is built directly as a phase vector rather
than as a CX-RZ-CX gate sequence.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .errors import ConfigurationError, ShapeError


class EntanglementPattern(str, enum.Enum):
    LINEAR = "linear"
    CIRCULAR = "circular"
    FULL = "full"

    @classmethod
    def parse(cls, value) -> "EntanglementPattern":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(
                f"unknown entanglement {value!r}; choose from {[p.value for p in cls]}"
            ) from None


# Tie-break and display order used by the experiment harness.
PATTERN_ORDER = (EntanglementPattern.CIRCULAR, EntanglementPattern.FULL, EntanglementPattern.LINEAR)


@dataclass(frozen=True)
class FeatureMapSpec:
    n_qubits: int
    reps: int = 1
    pattern: EntanglementPattern = EntanglementPattern.FULL

    def __post_init__(self):
        if not isinstance(self.n_qubits, (int, np.integer)) or not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in [1, {qsim.MAX_QUBITS}], got {self.n_qubits!r}")
        if not isinstance(self.reps, (int, np.integer)) or self.reps < 1:
            raise ConfigurationError(f"reps must be an integer and at least 1, got {self.reps!r}")
        object.__setattr__(self, "pattern", EntanglementPattern.parse(self.pattern))

    def to_dict(self) -> dict:
        return {"qubits": int(self.n_qubits), "reps": int(self.reps), "entanglement": self.pattern.value}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMapSpec":
        return cls(int(d["qubits"]), int(d["reps"]), EntanglementPattern.parse(d["entanglement"]))


def entanglement_pairs(n: int, pattern) -> list[tuple[int, int]]:
    pattern = EntanglementPattern.parse(pattern)
    if n < 1:
        raise ConfigurationError(f"need at least one qubit, got {n}")
    if pattern is EntanglementPattern.FULL:
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    pairs = [(i, i + 1) for i in range(n - 1)]
    # n=2 would duplicate (0, 1)
    if pattern is EntanglementPattern.CIRCULAR and n > 2:
        pairs.append((n - 1, 0))
    return pairs


def phi_single(x_i: float) -> float:
    return x_i


def phi_pair(x_i: float, x_j: float) -> float:
    return (math.pi - x_i) * (math.pi - x_j)


def encoding_terms(spec: FeatureMapSpec, pairs=None) -> list[tuple[int, ...]]:
    """Z-string supports of the exponent, singles first then pairs.

    Pairs are put in a canonical order (each as (min, max), then sorted) so
    the phase sum is accumulated identically for any listing of the same pair
    set; that makes pair-order invariance exact rather than approximate.
    """
    if pairs is None:
        pairs = entanglement_pairs(spec.n_qubits, spec.pattern)
    return [(i,) for i in range(spec.n_qubits)] + sorted((min(p), max(p)) for p in pairs)


def term_angles(x, terms) -> np.ndarray:
    """Coefficient of each Z-string term for the (already scaled) features ``x``."""
    x = np.asarray(x, dtype=float)
    angles = np.empty(len(terms))
    for k, t in enumerate(terms):
        angles[k] = phi_single(x[t[0]]) if len(t) == 1 else phi_pair(x[t[0]], x[t[1]])
    return angles


def term_signs(n: int, terms) -> np.ndarray:
    """(n_terms, 2**n) matrix of Z-string eigenvalues."""
    return np.stack([qsim.z_parity_signs(n, tuple(sorted(t))) for t in terms])


def _check_x(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ShapeError(f"feature vector must have length {n}, got shape {x.shape}")
    return x


def encode_amplitudes(angles_per_rep, n: int, signs: np.ndarray) -> np.ndarray:
    """Run the encoder from explicit term angles.

    ``angles_per_rep`` has shape ``(..., reps, n_terms)``; leading axes are a
    batch, which is how input gradients evaluate all shifted copies at once.
    """
    angles_per_rep = np.asarray(angles_per_rep, dtype=float)
    lead = angles_per_rep.shape[:-2]
    reps = angles_per_rep.shape[-2]
    amps = np.zeros(lead + (1 << n,), dtype=np.complex128)
    amps[..., 0] = 1.0
    for r in range(reps):
        amps = qsim._hadamard_all(amps, n)
        amps = amps * np.exp(1j * (angles_per_rep[..., r, :] @ signs))
    return amps


def encode(x, spec: FeatureMapSpec, pairs=None) -> qsim.StateVector:
    """Encoded state for one feature vector.

    ``pairs`` overrides the pattern's pair list (any order); it exists so the
    pair-order invariance can be checked directly.
    """
    x = _check_x(x, spec.n_qubits)
    terms = encoding_terms(spec, pairs)
    phases = term_angles(x, terms) @ term_signs(spec.n_qubits, terms)
    state = qsim.zero_state(spec.n_qubits)
    for _ in range(spec.reps):
        state = qsim.apply_hadamard_all(state)
        state = qsim.apply_diagonal_phase(state, phases)
    return state


def encode_many(X, spec: FeatureMapSpec) -> np.ndarray:
    """(m, 2**n) array of encoded amplitudes, one row per sample."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.n_qubits:
        raise ShapeError(f"expected rows of width {spec.n_qubits}, got shape {X.shape}")
    terms = encoding_terms(spec)
    signs = term_signs(spec.n_qubits, terms)
    angles = np.stack([term_angles(x, terms) for x in X]) if len(X) else np.zeros((0, len(terms)))
    per_rep = np.repeat(angles[:, None, :], spec.reps, axis=1)
    return encode_amplitudes(per_rep, spec.n_qubits, signs)
