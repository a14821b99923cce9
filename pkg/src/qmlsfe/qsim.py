"""Dense statevector simulation for small registers.

Bit convention: qubit ``q`` is bit ``q`` of the basis index, i.e. qubit 0 is
the least-significant bit.  ``|q2 q1 q0>`` therefore lives at index
``q0 + 2*q1 + 4*q2``.

Public operations take and return :class:`StateVector` values and never
mutate their input.  The underscored helpers work on raw complex arrays of
shape ``(..., 2**n)`` so that callers can push a whole batch of states
(e.g. every parameter-shifted copy of a circuit) through one gate call.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ShapeError

MAX_QUBITS = 20
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise ShapeError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class PauliZString:
    """Tensor product of Z on ``support`` and identity elsewhere."""

    n_qubits: int
    support: frozenset = frozenset()

    def __post_init__(self):
        support = frozenset(int(q) for q in self.support)
        bad = [q for q in support if not 0 <= q < self.n_qubits]
        if bad:
            raise IndexError(f"Z-string support {sorted(bad)} outside 0..{self.n_qubits - 1}")
        object.__setattr__(self, "support", support)

    @classmethod
    def all_z(cls, n_qubits: int) -> "PauliZString":
        return cls(n_qubits, frozenset(range(n_qubits)))

    def eigenvalues(self) -> np.ndarray:
        """Diagonal of the operator in the computational basis (entries +-1)."""
        return z_parity_signs(self.n_qubits, tuple(sorted(self.support)))

    def label(self) -> str:
        # Leftmost character is the highest qubit, matching ket order.
        return "".join("Z" if q in self.support else "I" for q in reversed(range(self.n_qubits)))


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ConfigurationError(f"qubit count must be an integer in [1, {MAX_QUBITS}], got {n!r}")


def _check_qubit(n: int, qubit: int) -> None:
    if not 0 <= qubit < n:
        raise IndexError(f"qubit index {qubit} out of range for {n} qubits")


@lru_cache(maxsize=None)
def _basis_bits(n: int) -> np.ndarray:
    """(2**n, n) array; row b holds the bits of b, column q is qubit q."""
    idx = np.arange(1 << n)
    return ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)


@lru_cache(maxsize=None)
def z_parity_signs(n: int, support: tuple) -> np.ndarray:
    """(-1)**(parity of the bits of b restricted to ``support``) for every basis b."""
    if not support:
        return np.ones(1 << n)
    parity = _basis_bits(n)[:, list(support)].sum(axis=1) & 1
    signs = 1.0 - 2.0 * parity
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=None)
def _cx_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    perm.setflags(write=False)
    return perm


def _hadamard_all(amps: np.ndarray, n: int) -> np.ndarray:
    lead = amps.shape[:-1]
    out = amps
    for q in range(n):
        view = out.reshape(lead + (1 << (n - 1 - q), 2, 1 << q))
        a0 = view[..., 0, :]
        a1 = view[..., 1, :]
        out = np.stack(((a0 + a1) * _INV_SQRT2, (a0 - a1) * _INV_SQRT2), axis=-2).reshape(amps.shape)
    return out


def _ry(amps: np.ndarray, n: int, qubit: int, angle) -> np.ndarray:
    """RY on one qubit; ``angle`` is a scalar or one angle per leading batch entry."""
    lead = amps.shape[:-1]
    angle = np.asarray(angle, dtype=float)
    # trailing axes broadcast against (hi, lo) of the reshaped view
    c = np.cos(angle / 2.0).reshape(angle.shape + (1, 1))
    s = np.sin(angle / 2.0).reshape(angle.shape + (1, 1))
    view = amps.reshape(lead + (1 << (n - 1 - qubit), 2, 1 << qubit))
    a0 = view[..., 0, :]
    a1 = view[..., 1, :]
    new0 = c * a0 - s * a1
    new1 = s * a0 + c * a1
    return np.stack((new0, new1), axis=-2).reshape(amps.shape)


def _cx(amps: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    return amps[..., _cx_permutation(n, control, target)]


def _expect_z(amps: np.ndarray, n: int, support: tuple) -> np.ndarray:
    return np.sum(np.abs(amps) ** 2 * z_parity_signs(n, support), axis=-1)


def zero_state(n: int) -> StateVector:
    _check_n(n)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps)


def apply_hadamard_all(state: StateVector) -> StateVector:
    return StateVector(state.n_qubits, _hadamard_all(state.amplitudes, state.n_qubits))


def apply_diagonal_phase(state: StateVector, phases) -> StateVector:
    """Multiply amplitude ``b`` by ``exp(i * phases[b])``."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (state.dim,):
        raise ShapeError(f"need {state.dim} phases, got shape {phases.shape}")
    return StateVector(state.n_qubits, state.amplitudes * np.exp(1j * phases))


def apply_ry(state: StateVector, qubit: int, angle: float) -> StateVector:
    _check_qubit(state.n_qubits, qubit)
    return StateVector(state.n_qubits, _ry(state.amplitudes, state.n_qubits, qubit, float(angle)))


def apply_cx(state: StateVector, control: int, target: int) -> StateVector:
    n = state.n_qubits
    _check_qubit(n, control)
    _check_qubit(n, target)
    if control == target:
        raise IndexError(f"control and target must differ (both {control})")
    return StateVector(n, _cx(state.amplitudes, n, control, target))


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b> with the conjugate on the left argument."""
    if a.n_qubits != b.n_qubits:
        raise ShapeError(f"cannot take overlap of {a.n_qubits}- and {b.n_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def expectation_z_string(state: StateVector, obs: PauliZString) -> float:
    if obs.n_qubits != state.n_qubits:
        raise ShapeError(f"observable acts on {obs.n_qubits} qubits, state has {state.n_qubits}")
    return float(_expect_z(state.amplitudes, state.n_qubits, tuple(sorted(obs.support))))
