"""C-SVC and epsilon-SVR on precomputed kernels, solved by SMO.

Both problems are cast in the common form

    min_a  0.5 a^T Q a + p^T a    s.t.  s^T a = 0,  0 <= a_i <= C

with ``s_i`` in {-1, +1}.  For classification ``Q = (y y^T) * K``, ``p = -1``
and ``s = y``.  For regression the variables are ``(alpha, alpha*)`` stacked,
``Q = [[K, -K], [-K, K]]``, ``p = (eps - t, eps + t)`` and ``s = (1, -1)``.

The solver updates the maximally violating pair each iteration (first-order
working-set selection) and stops once the violation gap drops below ``tol``.
Every update keeps the box and equality constraints satisfied exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError

TAU = 1e-12
PSD_TOL = 1e-8


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class SmoResult:
    alpha: np.ndarray
    grad: np.ndarray
    rho: float
    gap: float
    n_iter: int
    converged: bool


def _select_pair(alpha, grad, s, C):
    """Indices of the maximal violating pair and the gap m(a) - M(a)."""
    minus_sg = -s * grad
    up = ((s > 0) & (alpha < C)) | ((s < 0) & (alpha > 0))
    low = ((s > 0) & (alpha > 0)) | ((s < 0) & (alpha < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    i = int(np.flatnonzero(up)[np.argmax(minus_sg[up])])
    j = int(np.flatnonzero(low)[np.argmin(minus_sg[low])])
    return i, j, float(minus_sg[i] - minus_sg[j])


def _rho(alpha, grad, s, C):
    sg = s * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(sg[free].mean())
    at_upper = alpha >= C
    # Bound variables only bracket rho; take the midpoint of the bracket.
    ub_mask = (at_upper & (s < 0)) | (~at_upper & (s > 0))
    lb_mask = ~ub_mask
    ub = sg[ub_mask].min() if ub_mask.any() else np.inf
    lb = sg[lb_mask].max() if lb_mask.any() else -np.inf
    if np.isinf(ub):
        return float(lb)
    if np.isinf(lb):
        return float(ub)
    return float((ub + lb) / 2.0)


def smo_solve(Q, p, s, C: float, tol: float = 1e-3, max_iter: int = 10_000, callback=None) -> SmoResult:
    Q = np.asarray(Q, dtype=float)
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    n = p.shape[0]
    alpha = np.zeros(n)
    grad = p.copy()
    diag = np.diag(Q)
    gap = np.inf
    it = 0
    converged = False
    while it < max_iter:
        i, j, gap = _select_pair(alpha, grad, s, C)
        if i < 0 or gap < tol:
            converged = True
            break
        it += 1
        old_i, old_j = alpha[i], alpha[j]
        if s[i] != s[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Q[i, j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            ai, aj = old_i + delta, old_j + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Q[i, j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            ai, aj = old_i - delta, old_j + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += Q[:, i] * (ai - old_i) + Q[:, j] * (aj - old_j)
        if callback is not None:
            callback(alpha)
    else:
        _, _, gap = _select_pair(alpha, grad, s, C)
        converged = gap < tol
    return SmoResult(alpha, grad, _rho(alpha, grad, s, C), float(max(gap, 0.0)), it, converged)


def _check_kernel(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ShapeError(f"training kernel must be square, got shape {K.shape}")
    if K.shape[0] == 0:
        raise ConfigurationError("training kernel is empty")
    if not np.all(np.isfinite(K)):
        raise NumericError("training kernel has non-finite entries")
    if np.max(np.abs(K - K.T)) > 1e-8:
        raise NumericError("training kernel is not symmetric")
    lam = np.linalg.eigvalsh((K + K.T) / 2).min()
    if lam < -PSD_TOL * max(1.0, float(np.abs(np.diag(K)).max())):
        raise NumericError(f"training kernel is not positive semidefinite (min eigenvalue {lam:.3e})")
    return K


def _check_C(C):
    if not C > 0:
        raise ConfigurationError(f"C must be positive, got {C}")


MIN_ITER = 100_000


def _max_iter(max_passes, m):
    """Iteration cap: ``max_passes`` sweeps of ``m`` pair updates (default 10*m sweeps)."""
    if max_passes is None:
        return max(10 * m * m, MIN_ITER)
    return max(int(max_passes) * max(m, 1), 1)


def as_signed_labels(y) -> np.ndarray:
    """Map {0,1} or {-1,+1} labels onto {-1,+1}."""
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        y = np.where(y == 1, 1.0, -1.0)
    elif vals <= {-1, 1}:
        y = y.astype(float)
    else:
        raise ConfigurationError(f"labels must be in {{-1, +1}} or {{0, 1}}, got {sorted(vals)}")
    if len(np.unique(y)) < 2:
        raise ConfigurationError("need both classes to train a classifier")
    return y


@dataclass
class SvcModel:
    dual_coefs: np.ndarray  # alpha_i * y_i
    bias: float
    C: float
    tol: float = 1e-3
    support_indices: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True
    training_ids: list = field(default_factory=list)

    def alphas(self, y) -> np.ndarray:
        return self.dual_coefs * as_signed_labels(y)

    def to_dict(self) -> dict:
        return {
            "kind": "svc",
            "dual_coefs": [float(v) for v in self.dual_coefs],
            "bias": float(self.bias),
            "C": float(self.C),
            "tol": float(self.tol),
            "support_indices": [int(i) for i in self.support_indices],
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
            "training_ids": list(self.training_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvcModel":
        return cls(
            np.asarray(d["dual_coefs"], dtype=float), float(d["bias"]), float(d["C"]), float(d["tol"]),
            list(d["support_indices"]), int(d["n_iter"]), bool(d["converged"]), list(d.get("training_ids", [])),
        )


@dataclass
class SvrModel:
    dual_coefs: np.ndarray  # alpha_i - alpha*_i
    bias: float
    C: float
    epsilon: float
    tol: float = 1e-3
    support_indices: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True
    training_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": "svr",
            "dual_coefs": [float(v) for v in self.dual_coefs],
            "bias": float(self.bias),
            "C": float(self.C),
            "epsilon": float(self.epsilon),
            "tol": float(self.tol),
            "support_indices": [int(i) for i in self.support_indices],
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
            "training_ids": list(self.training_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        return cls(
            np.asarray(d["dual_coefs"], dtype=float), float(d["bias"]), float(d["C"]), float(d["epsilon"]),
            float(d["tol"]), list(d["support_indices"]), int(d["n_iter"]), bool(d["converged"]),
            list(d.get("training_ids", [])),
        )


def model_from_dict(d: dict):
    return {"svc": SvcModel, "svr": SvrModel}[d["kind"]].from_dict(d)


def _warn_unconverged(kind, res):
    if not res.converged:
        warnings.warn(
            f"{kind} SMO stopped after {res.n_iter} iterations with violation {res.gap:.3e}",
            ConvergenceWarning,
            stacklevel=3,
        )


def train_svc(K, y, C: float = 1.0, tol: float = 1e-3, max_passes: int | None = None) -> SvcModel:
    K = _check_kernel(K)
    y = as_signed_labels(y)
    if y.shape != (K.shape[0],):
        raise ShapeError(f"{y.shape[0]} labels for a {K.shape[0]}-sample kernel")
    _check_C(C)
    m = K.shape[0]
    Q = np.outer(y, y) * K
    res = smo_solve(Q, -np.ones(m), y, C, tol, _max_iter(max_passes, m))
    _warn_unconverged("SVC", res)
    coefs = res.alpha * y
    return SvcModel(coefs, 0.0 - res.rho, C, tol, np.flatnonzero(res.alpha > 0).tolist(), res.n_iter, res.converged)


def train_svr(K, t, C: float = 1.0, epsilon: float = 0.1, tol: float = 1e-3,
              max_passes: int | None = None) -> SvrModel:
    K = _check_kernel(K)
    t = np.asarray(t, dtype=float)
    m = K.shape[0]
    if t.shape != (m,):
        raise ShapeError(f"{t.shape} targets for a {m}-sample kernel")
    if not np.all(np.isfinite(t)):
        raise ConfigurationError("targets must be finite")
    _check_C(C)
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be non-negative, got {epsilon}")
    Q = np.block([[K, -K], [-K, K]])
    p = np.concatenate([epsilon - t, epsilon + t])
    s = np.concatenate([np.ones(m), -np.ones(m)])
    res = smo_solve(Q, p, s, C, tol, _max_iter(max_passes, 2 * m))
    _warn_unconverged("SVR", res)
    coefs = res.alpha[:m] - res.alpha[m:]
    return SvrModel(coefs, 0.0 - res.rho, C, epsilon, tol, np.flatnonzero(coefs != 0).tolist(), res.n_iter,
                    res.converged)


def _decision(model, K_cross) -> np.ndarray:
    K_cross = np.asarray(K_cross, dtype=float)
    m = model.dual_coefs.shape[0]
    if K_cross.ndim == 1 and K_cross.size == 0:
        K_cross = K_cross.reshape(0, m)
    if K_cross.ndim != 2 or K_cross.shape[1] != m:
        raise ShapeError(f"cross kernel needs {m} columns (training size), got shape {K_cross.shape}")
    return K_cross @ model.dual_coefs + model.bias


def predict_svc(model: SvcModel, K_cross):
    """Return ``(labels in {-1,+1}, decision values)``; a decision of exactly 0 maps to +1."""
    dec = _decision(model, K_cross)
    return np.where(dec >= 0, 1, -1), dec


def predict_svr(model: SvrModel, K_cross) -> np.ndarray:
    return _decision(model, K_cross)


def svc_dual_objective(alpha, K, y) -> float:
    ay = np.asarray(alpha) * as_signed_labels(y)
    return float(np.sum(alpha) - 0.5 * ay @ np.asarray(K) @ ay)


def svr_dual_objective(beta, K, t, epsilon) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(-0.5 * beta @ np.asarray(K) @ beta - epsilon * np.abs(beta).sum() + np.asarray(t) @ beta)


def dual_objective(model, K, y_or_t) -> float:
    if isinstance(model, SvcModel):
        return svc_dual_objective(model.alphas(y_or_t), K, y_or_t)
    return svr_dual_objective(model.dual_coefs, K, y_or_t, model.epsilon)


def _bound_violations(u, a, C, at_zero_needs_nonneg=True):
    """Per-sample complementarity violation of margin quantity ``u`` for multiplier ``a``.

    a == 0 requires u >= 0, a == C requires u <= 0, 0 < a < C requires u == 0.
    """
    eps = 1e-12 * max(C, 1.0)
    lower = a <= eps
    upper = a >= C - eps
    v = np.abs(u)
    v = np.where(lower, np.maximum(0.0, -u), v)
    v = np.where(upper & ~lower, np.maximum(0.0, u), v)
    return v


def kkt_report(model, K, y_or_t) -> float:
    """Largest KKT violation (complementarity, box or equality) of a trained model."""
    K = np.asarray(K, dtype=float)
    f = K @ model.dual_coefs + model.bias
    C = model.C
    if isinstance(model, SvcModel):
        y = as_signed_labels(y_or_t)
        a = model.dual_coefs * y
        viol = _bound_violations(y * f - 1.0, a, C)
        box = np.maximum(0.0, np.maximum(-a, a - C))
        eq = abs(float(np.sum(model.dual_coefs)))
    else:
        t = np.asarray(y_or_t, dtype=float)
        r = t - f
        a = np.maximum(model.dual_coefs, 0.0)
        a_star = np.maximum(-model.dual_coefs, 0.0)
        # alpha pushes f up (active when r >= eps), alpha* pushes f down (active when r <= -eps)
        viol = np.maximum(_bound_violations(model.epsilon - r, a, C),
                          _bound_violations(model.epsilon + r, a_star, C))
        box = np.maximum(0.0, np.abs(model.dual_coefs) - C)
        eq = abs(float(np.sum(model.dual_coefs)))
    if viol.size == 0:
        return 0.0
    return float(max(viol.max(), box.max(), eq))
