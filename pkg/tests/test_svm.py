import math

import numpy as np
import pytest

import oracles
from qmlsfe import qkernel, svm
from qmlsfe.errors import ConfigurationError, NumericError, ShapeError
from qmlsfe.featmap import FeatureMapSpec


def quantum_problem(rng, m, reps=1, extra=3):
    X = rng.uniform(0, math.pi, (m + extra, 3))
    spec = FeatureMapSpec(3, reps, "full")
    return qkernel.gram_matrix(X[:m], spec), qkernel.cross_matrix(X, X[:m], spec)


def test_two_point_svc_analytic():
    # dual reduces to maximise 2a - a^2 with a1 = a2 = a, optimum a = 1
    model = svm.train_svc(np.eye(2), [1, -1], C=1.0)
    assert np.allclose(model.dual_coefs, [1, -1], atol=1e-9)
    assert model.bias == pytest.approx(0.0, abs=1e-9)
    labels, dec = svm.predict_svc(model, np.eye(2))
    assert labels.tolist() == [1, -1]
    assert np.allclose(dec, [1, -1], atol=1e-9)


def test_zero_one_labels_are_mapped():
    a = svm.train_svc(np.eye(2), [1, 0], C=1.0)
    b = svm.train_svc(np.eye(2), [1, -1], C=1.0)
    assert np.array_equal(a.dual_coefs, b.dual_coefs)


def test_hard_margin_separable(rng):
    X = np.vstack([rng.normal(-2, 0.3, (10, 2)), rng.normal(2, 0.3, (10, 2))])
    y = np.array([-1] * 10 + [1] * 10)
    K = X @ X.T
    model = svm.train_svc(K, y, C=1e6)
    labels, _ = svm.predict_svc(model, K)
    assert np.array_equal(labels, y)


def test_conflicting_duplicates_clamp_at_C():
    K = np.ones((2, 2))
    y = [1, -1]
    model = svm.train_svc(K, y, C=0.1)
    alpha = model.alphas(y)
    assert np.allclose(alpha, [0.1, 0.1])
    ref_alpha, ref_obj, _ = oracles.svc_oracle(K, y, 0.1)
    assert np.allclose(ref_alpha, [0.1, 0.1], atol=1e-6)
    assert svm.dual_objective(model, K, y) == pytest.approx(ref_obj, abs=1e-9)


def test_predict_svc_edge_cases():
    model = svm.train_svc(np.eye(2), [1, -1], C=1.0)
    model.bias = -0.25
    labels, dec = svm.predict_svc(model, np.zeros((3, 2)))
    assert labels.tolist() == [-1, -1, -1] and np.allclose(dec, -0.25)
    model.bias = 0.0
    labels, _ = svm.predict_svc(model, np.zeros((2, 2)))
    assert labels.tolist() == [1, 1]  # exact zero decision goes to +1
    labels, dec = svm.predict_svc(model, np.zeros((0, 2)))
    assert labels.shape == (0,) and dec.shape == (0,)
    with pytest.raises(ShapeError):
        svm.predict_svc(model, np.zeros((1, 3)))


def test_svr_constant_targets():
    K = np.ones((4, 4)) * 0.5 + np.eye(4) * 0.5
    model = svm.train_svr(K, [3.0] * 4, C=1.0, epsilon=0.001)
    assert not model.dual_coefs.any()
    assert model.bias == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(svm.predict_svr(model, np.random.default_rng(0).uniform(size=(5, 4))), 3.0)
    assert svm.kkt_report(model, K, [3.0] * 4) == 0.0


def test_svr_two_point_analytic():
    model = svm.train_svr(np.eye(2), [1.0, -1.0], C=100.0, epsilon=0.0)
    assert np.allclose(model.dual_coefs, [1, -1], atol=1e-6)
    assert model.bias == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(svm.predict_svr(model, np.eye(2)), [1, -1], atol=1e-3)
    assert np.allclose(svm.predict_svr(model, np.zeros((2, 2))), model.bias)


def test_svr_wide_tube_has_no_support_vectors(rng):
    K, _ = quantum_problem(rng, 6)
    t = rng.uniform(-0.2, 0.2, 6)
    model = svm.train_svr(K, t, C=10.0, epsilon=0.5)
    assert model.support_indices == []
    assert not model.dual_coefs.any()


def test_kkt_report(rng):
    K, _ = quantum_problem(rng, 8)
    y = np.array([1, -1] * 4)
    model = svm.train_svc(K, y, C=1.0)
    assert svm.kkt_report(model, K, y) <= model.tol
    perturbed = svm.SvcModel(model.dual_coefs + rng.normal(0, 0.05, 8), model.bias, model.C)
    assert svm.kkt_report(perturbed, K, y) > model.tol
    t = rng.normal(size=8)
    reg = svm.train_svr(K, t, C=10.0, epsilon=0.01)
    assert svm.kkt_report(reg, K, t) <= reg.tol


def test_feasibility_every_iteration(rng):
    K, _ = quantum_problem(rng, 10, reps=2)
    y = np.where(rng.uniform(size=10) > 0.5, 1.0, -1.0)
    y[:2] = [1, -1]
    C = 2.0
    seen = []

    def check(alpha):
        assert np.all(alpha >= 0) and np.all(alpha <= C)
        seen.append(abs(float(alpha @ y)))

    res = svm.smo_solve(np.outer(y, y) * K, -np.ones(10), y, C, 1e-3, 10_000, callback=check)
    assert res.converged and seen and max(seen) < 1e-8

    t = rng.normal(size=10)
    Q = np.block([[K, -K], [-K, K]])
    s = np.concatenate([np.ones(10), -np.ones(10)])
    sums = []
    svm.smo_solve(Q, np.concatenate([0.01 - t, 0.01 + t]), s, C, 1e-3, 10_000,
                  callback=lambda a: sums.append(abs(float(a @ s))))
    assert max(sums) < 1e-8


@pytest.mark.parametrize("m", [2, 3, 4])
def test_small_problems_match_oracle(rng, m):
    for _ in range(5):
        K, Kc = quantum_problem(rng, m)
        y = rng.choice([-1, 1], m)
        y[0] = -y[1]
        C = float(rng.choice([0.1, 1.0, 10.0]))
        model = svm.train_svc(K, y, C)
        alpha, obj, b = oracles.svc_oracle(K, y, C)
        assert svm.dual_objective(model, K, y) == pytest.approx(obj, abs=1e-4)
        ref = np.where(Kc @ (alpha * y) + b >= 0, 1, -1)
        assert np.array_equal(svm.predict_svc(model, Kc)[0], ref)

        t = rng.normal(size=m)
        reg = svm.train_svr(K, t, C, 0.01)
        beta, obj, b = oracles.svr_oracle(K, t, C, 0.01)
        assert svm.dual_objective(reg, K, t) == pytest.approx(obj, abs=1e-4)
        assert np.max(np.abs(svm.predict_svr(reg, Kc) - (Kc @ beta + b))) < 1e-3


def test_duplicate_support_vector_does_not_lower_objective(rng):
    K, _ = quantum_problem(rng, 6, extra=0)
    y = np.array([1, -1, 1, -1, 1, -1])
    model = svm.train_svc(K, y, C=1.0, tol=1e-6)
    sv = model.support_indices[0]
    idx = list(range(6)) + [sv]
    K2, y2 = K[np.ix_(idx, idx)], y[idx]
    model2 = svm.train_svc(K2, y2, C=1.0, tol=1e-6)
    assert svm.dual_objective(model2, K2, y2) >= svm.dual_objective(model, K, y) - 1e-6


def test_deterministic(rng):
    K, _ = quantum_problem(rng, 12, reps=3)
    y = np.array([1, -1] * 6)
    a, b = svm.train_svc(K, y, 10.0), svm.train_svc(K, y, 10.0)
    assert np.array_equal(a.dual_coefs, b.dual_coefs) and a.bias == b.bias


def test_errors():
    with pytest.raises(NumericError):
        svm.train_svc(np.array([[1.0, 2.0], [2.0, 1.0]]), [1, -1])
    with pytest.raises(ConfigurationError):
        svm.train_svc(np.eye(3), [1, 1, 1])
    with pytest.raises(ConfigurationError):
        svm.train_svc(np.eye(2), [1, -1], C=0.0)
    with pytest.raises(ShapeError):
        svm.train_svc(np.eye(3), [1, -1])
    with pytest.raises(ShapeError):
        svm.train_svr(np.ones((2, 3)), [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        svm.train_svr(np.eye(2), [1.0, 2.0], epsilon=-1)


def test_unconverged_run_warns(rng):
    K, _ = quantum_problem(rng, 10, reps=3)
    y = np.array([1, -1] * 5)
    with pytest.warns(svm.ConvergenceWarning):
        model = svm.train_svc(K, y, C=100.0, tol=1e-12, max_passes=1)
    assert not model.converged


def test_json_round_trip(rng):
    K, Kc = quantum_problem(rng, 5)
    y = np.array([1, -1, 1, -1, 1])
    model = svm.train_svc(K, y, 1.0)
    back = svm.model_from_dict(model.to_dict())
    assert np.array_equal(svm.predict_svc(back, Kc)[1], svm.predict_svc(model, Kc)[1])
    reg = svm.train_svr(K, rng.normal(size=5), 1.0, 0.01)
    back = svm.model_from_dict(reg.to_dict())
    assert np.array_equal(svm.predict_svr(back, Kc), svm.predict_svr(reg, Kc))
