"""Fidelity kernel K(x, x') = |<phi(x)|phi(x')>|^2 from exact statevectors."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import featmap, qsim
from .errors import ConfigurationError, ShapeError
from .featmap import FeatureMapSpec


def kernel_entry(x, x_prime, spec: FeatureMapSpec) -> float:
    a = featmap.encode(x, spec)
    b = featmap.encode(x_prime, spec)
    return abs(qsim.inner_product(a, b)) ** 2


def _rows(X, spec: FeatureMapSpec) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, spec.n_qubits)
    if X.ndim != 2 or X.shape[1] != spec.n_qubits:
        raise ShapeError(f"expected rows of width {spec.n_qubits}, got shape {X.shape}")
    return X


def _entry(a: np.ndarray, b: np.ndarray) -> float:
    # One vdot per entry keeps the summation order independent of how
    # entries are distributed across workers.
    return abs(np.vdot(a, b)) ** 2


def _fill_rows(out, rows, states_a, states_b, symmetric):
    for i in rows:
        start = i if symmetric else 0
        for j in range(start, states_b.shape[0]):
            out[i, j] = _entry(states_a[i], states_b[j])


def _compute(states_a, states_b, symmetric: bool, jobs: int) -> np.ndarray:
    p, m = states_a.shape[0], states_b.shape[0]
    out = np.zeros((p, m))
    if jobs <= 1 or p < 2:
        _fill_rows(out, range(p), states_a, states_b, symmetric)
    else:
        chunks = [range(k, p, jobs) for k in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda rows: _fill_rows(out, rows, states_a, states_b, symmetric), chunks))
    if symmetric:
        iu = np.triu_indices(p, 1)
        out[iu[1], iu[0]] = out[iu]
    return out


def gram_matrix(X, spec: FeatureMapSpec, jobs: int = 1) -> np.ndarray:
    """Symmetric m x m kernel; each sample is encoded exactly once."""
    X = _rows(X, spec)
    if X.shape[0] == 0:
        raise ConfigurationError("cannot build a Gram matrix from zero samples")
    states = featmap.encode_many(X, spec)
    return _compute(states, states, True, jobs)


def cross_matrix(A, B, spec: FeatureMapSpec, jobs: int = 1) -> np.ndarray:
    """p x m kernel between prediction rows ``A`` and training rows ``B``."""
    A = _rows(A, spec)
    B = _rows(B, spec)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    return _compute(featmap.encode_many(A, spec), featmap.encode_many(B, spec), False, jobs)


def check_kernel(K, tol: float = 1e-10, eig_tol: float = 1e-8) -> dict:
    """Diagnostics for a square kernel matrix: max deviations and min eigenvalue."""
    K = np.asarray(K, dtype=float)
    return {
        "max_asymmetry": float(np.max(np.abs(K - K.T))) if K.size else 0.0,
        "max_diag_error": float(np.max(np.abs(np.diag(K) - 1.0))) if K.size else 0.0,
        "min_entry": float(K.min()) if K.size else 0.0,
        "max_entry": float(K.max()) if K.size else 0.0,
        "min_eigenvalue": float(np.linalg.eigvalsh((K + K.T) / 2).min()) if K.size else 0.0,
    }


def write_kernel_csv(path, K, labels) -> None:
    K = np.asarray(K)
    labels = list(labels)
    if K.shape != (len(labels), len(labels)):
        raise ShapeError(f"kernel shape {K.shape} does not match {len(labels)} labels")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["element"] + labels)
        for lab, row in zip(labels, K):
            w.writerow([lab] + [repr(float(v)) for v in row])
