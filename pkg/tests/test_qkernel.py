import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qmlsfe import featmap, qkernel
from qmlsfe.errors import ConfigurationError, ShapeError
from qmlsfe.featmap import FeatureMapSpec

FULL1 = FeatureMapSpec(3, 1, "full")

# |sum of 8 unit phasors|^2 / 64, evaluated by oracles.phase_sum_kernel
PI_VS_ZERO_KERNEL = 0.5473743063792639


def test_pi_vs_zero_entry_matches_phase_sum_oracle():
    x, xp = [math.pi] * 3, [0.0] * 3
    assert oracles.phase_sum_kernel(x, xp, [(0, 1), (0, 2), (1, 2)]) == pytest.approx(PI_VS_ZERO_KERNEL, abs=1e-14)
    assert qkernel.kernel_entry(x, xp, FULL1) == pytest.approx(PI_VS_ZERO_KERNEL, abs=1e-12)


def test_entry_against_oracle_random(rng):
    for pattern in ("linear", "full"):
        spec = FeatureMapSpec(3, 1, pattern)
        pairs = featmap.entanglement_pairs(3, pattern)
        for _ in range(10):
            x, xp = rng.uniform(0, math.pi, (2, 3))
            assert qkernel.kernel_entry(x, xp, spec) == pytest.approx(oracles.phase_sum_kernel(x, xp, pairs),
                                                                      abs=1e-12)


def test_entry_self_and_symmetry(rng):
    x, xp = rng.uniform(-2, 5, (2, 3))
    spec = FeatureMapSpec(3, 2, "linear")
    assert qkernel.kernel_entry(x, x, spec) == pytest.approx(1.0, abs=1e-12)
    assert qkernel.kernel_entry(x, xp, spec) == pytest.approx(qkernel.kernel_entry(xp, x, spec), abs=1e-14)
    with pytest.raises(ShapeError):
        qkernel.kernel_entry(x, [1.0, 2.0], spec)


def test_gram_small_cases(rng):
    x = rng.uniform(0, math.pi, 3)
    assert qkernel.gram_matrix([x], FULL1) == pytest.approx(np.array([[1.0]]), abs=1e-12)
    X = np.vstack([x, rng.uniform(0, math.pi, 3), x])
    K = qkernel.gram_matrix(X, FULL1)
    assert abs(K[0, 2] - 1) < 1e-10
    with pytest.raises(ConfigurationError):
        qkernel.gram_matrix(np.zeros((0, 3)), FULL1)
    with pytest.raises(ShapeError):
        qkernel.gram_matrix(np.zeros((2, 4)), FULL1)


def test_gram_entries_match_kernel_entry(rng):
    X = rng.uniform(0, math.pi, (6, 3))
    spec = FeatureMapSpec(3, 3, "circular")
    K = qkernel.gram_matrix(X, spec)
    for i in range(6):
        for j in range(6):
            assert K[i, j] == pytest.approx(qkernel.kernel_entry(X[i], X[j], spec), abs=1e-12)


def test_gram_psd_random(rng):
    X = rng.uniform(0, math.pi, (10, 3))
    info = qkernel.check_kernel(qkernel.gram_matrix(X, FeatureMapSpec(3, 2, "full")))
    assert info["min_eigenvalue"] >= -1e-8
    assert info["max_asymmetry"] == 0.0
    assert info["max_diag_error"] <= 1e-10


def test_cross_matrix(rng):
    A = rng.uniform(0, math.pi, (4, 3))
    B = rng.uniform(0, math.pi, (3, 3))
    assert np.array_equal(qkernel.cross_matrix(A, A, FULL1), qkernel.cross_matrix(A, A, FULL1))
    assert np.max(np.abs(qkernel.cross_matrix(A, A, FULL1) - qkernel.gram_matrix(A, FULL1))) < 1e-14
    assert qkernel.cross_matrix(np.zeros((0, 3)), B, FULL1).shape == (0, 3)
    one = qkernel.cross_matrix(A[:1], B[:1], FULL1)
    assert one.shape == (1, 1) and one[0, 0] == pytest.approx(qkernel.kernel_entry(A[0], B[0], FULL1), abs=1e-12)
    with pytest.raises(ShapeError):
        qkernel.cross_matrix(A, np.zeros((2, 2)), FULL1)


def test_parallel_is_bit_identical(rng):
    X = rng.uniform(0, math.pi, (21, 3))
    spec = FeatureMapSpec(3, 4, "linear")
    assert np.array_equal(qkernel.gram_matrix(X, spec, jobs=1), qkernel.gram_matrix(X, spec, jobs=4))
    assert np.array_equal(qkernel.cross_matrix(X[:5], X, spec, jobs=1), qkernel.cross_matrix(X[:5], X, spec, jobs=3))


def test_global_phase_invariance(rng):
    x, xp = rng.uniform(0, math.pi, (2, 3))
    a = featmap.encode(x, FULL1).amplitudes
    b = featmap.encode(xp, FULL1).amplitudes
    ref = abs(np.vdot(a, b)) ** 2
    assert abs(abs(np.vdot(a * np.exp(0.7j), b * np.exp(-2.1j))) ** 2 - ref) < 1e-14


def test_kernel_csv(tmp_path, rng):
    X = rng.uniform(0, math.pi, (3, 3))
    K = qkernel.gram_matrix(X, FULL1)
    path = tmp_path / "k.csv"
    qkernel.write_kernel_csv(path, K, ["Al", "Zn", "Ca"])
    lines = path.read_text().splitlines()
    assert lines[0] == "element,Al,Zn,Ca"
    assert float(lines[2].split(",")[2]) == K[1, 1]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), reps=st.integers(1, 5),
       pattern=st.sampled_from(["linear", "circular", "full"]))
def test_gram_invariants_arbitrary_inputs(seed, reps, pattern):
    X = np.random.default_rng(seed).uniform(-10, 10, (8, 3))
    info = qkernel.check_kernel(qkernel.gram_matrix(X, FeatureMapSpec(3, reps, pattern)))
    assert info["max_diag_error"] <= 1e-10
    assert info["max_asymmetry"] <= 1e-10
    assert -1e-10 <= info["min_entry"] and info["max_entry"] <= 1 + 1e-10
    assert info["min_eigenvalue"] >= -1e-8
