import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lapsekit import svm
from oracles import rbf_gram, svm_dual_projected_gradient


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 51))
    X = rng.normal(size=(n, 2))
    labels = rng.integers(0, 2, n)
    labels[:2] = (0, 1)
    C = float(rng.choice([0.1, 1.0, 10.0]))
    gamma = float(rng.choice([0.1, 0.5, 2.0]))
    return X, labels, C, gamma


def blobs(rng, n=40):
    X = np.vstack([rng.normal(-2, 0.4, size=(n // 2, 2)), rng.normal(2, 0.4, size=(n // 2, 2))])
    return X, np.array([0] * (n // 2) + [1] * (n // 2))


def full_alpha(model, X, labels):
    """Recover the dual vector over training rows from the stored support set."""
    alpha = np.zeros(len(X))
    y = np.where(labels == 1, 1.0, -1.0)
    for sv, ay in zip(model.support_vectors, model.alphas_times_labels):
        i = int(np.flatnonzero(np.all(X == sv, axis=1))[0])
        alpha[i] = ay * y[i]
    return alpha, y


# ---------------------------------------------------------------- kernel

def test_rbf_kernel_values():
    assert svm.rbf_kernel([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0
    assert svm.rbf_kernel([0.0, 0.0], [1.0, 0.0], 1.0) == pytest.approx(math.exp(-1), abs=1e-12)
    assert svm.rbf_kernel([0.0], [1.0], 1e6) == pytest.approx(0.0, abs=1e-300)
    with pytest.raises(ValueError):
        svm.rbf_kernel([0.0], [0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        svm.rbf_kernel([0.0], [1.0], 0.0)


def test_rbf_matrix_matches_pairwise(rng):
    X = rng.normal(size=(7, 3))
    assert np.allclose(svm.rbf_matrix(X, X, 0.7), rbf_gram(X, 0.7), atol=1e-13)


# ---------------------------------------------------------------- fit

def test_two_points_symmetric_solution():
    X = np.array([[-1.0], [1.0]])
    model = svm.fit(X, np.array([0, 1]), svm.SvmParams(cost=1e3, kernel_gamma=0.5, tolerance=1e-9))
    assert model.decision_function(np.array([[0.0]]))[0] == pytest.approx(0.0, abs=1e-9)
    assert abs(model.alphas_times_labels[0]) == pytest.approx(abs(model.alphas_times_labels[1]))
    xs = np.linspace(-1, 1, 21)
    f = model.decision_function(xs[:, None])
    assert np.all(np.sign(f[xs != 0]) == np.sign(xs[xs != 0]))


def test_separable_blobs_fit_perfectly(rng):
    X, y = blobs(rng)
    model = svm.fit(X, y, svm.SvmParams(cost=10, kernel_gamma=0.5))
    assert model.converged
    assert np.array_equal(model.predict(X), y)


@pytest.mark.parametrize("seed", range(6))
def test_dual_objective_matches_qp_oracle(seed):
    X, labels, C, gamma = random_instance(seed)
    y = np.where(labels == 1, 1.0, -1.0)
    K = rbf_gram(X, gamma)
    ref, _ = svm_dual_projected_gradient(K, y, C)
    alpha, _, converged, _ = svm.solve_dual(X, y, svm.SvmParams(cost=C, kernel_gamma=gamma, tolerance=1e-6))
    assert converged
    assert svm.dual_objective(alpha, y, K) == pytest.approx(ref, abs=1e-4)


@given(st.integers(0, 10_000))
def test_dual_feasibility_and_kkt(seed):
    X, labels, C, gamma = random_instance(seed)
    params = svm.SvmParams(cost=C, kernel_gamma=gamma)
    model = svm.fit(X, labels, params)
    alpha, y = full_alpha(model, X, labels)
    assert np.all(alpha >= 0) and np.all(alpha <= C)
    assert abs(alpha @ y) <= 1e-8
    assert np.all(np.abs(model.alphas_times_labels) > 0)
    if model.converged:
        free = (alpha > 0) & (alpha < C)
        margin = y[free] * model.decision_function(X[free])
        assert np.all(np.abs(margin - 1.0) <= params.tolerance)


def test_conflicting_duplicates_hit_the_bound():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 3.0], [-3.0, -3.0]])
    labels = np.array([0, 1, 1, 0])
    y = np.where(labels == 1, 1.0, -1.0)
    alpha, *_ = svm.solve_dual(X, y, svm.SvmParams(cost=2.0, kernel_gamma=0.5, tolerance=1e-8))
    assert alpha[0] == pytest.approx(2.0) and alpha[1] == pytest.approx(2.0)
    assert abs(alpha @ y) <= 1e-8


def test_large_input_guard():
    X = np.zeros((svm.MAX_DESK_ROWS + 1, 1))
    y = np.zeros(svm.MAX_DESK_ROWS + 1, dtype=int)
    with pytest.raises(ValueError, match="allow_large"):
        svm.fit(X, y, svm.SvmParams())


def test_single_class_rejected():
    with pytest.raises(ValueError):
        svm.fit(np.zeros((5, 2)), np.ones(5, dtype=int), svm.SvmParams())


def test_params_validation():
    for bad in ({"cost": 0}, {"kernel_gamma": -1}, {"tolerance": 0}, {"max_passes": 0}):
        with pytest.raises(ValueError):
            svm.SvmParams(**bad)
    p = svm.SvmParams(cost=3, kernel_gamma=0.1)
    assert svm.SvmParams.from_dict(p.to_dict()) == p


def test_stalled_run_reports_not_converged(rng):
    X = rng.normal(size=(60, 2))
    y = rng.integers(0, 2, 60)
    model = svm.fit(X, y, svm.SvmParams(cost=100, kernel_gamma=5, tolerance=1e-15, max_passes=1))
    assert not model.converged
    assert np.all(np.isfinite(model.decision_function(X)))


# ---------------------------------------------------------------- predict

def test_boundary_predicts_zero():
    model = svm.SvmModel(np.zeros((1, 2)), np.array([0.0]), 0.0, 1.0)
    assert model.predict(np.ones((3, 2))).tolist() == [0, 0, 0]
    model = svm.SvmModel(np.zeros((1, 2)), np.array([1.0]), 0.0, 1.0)
    assert svm.predict(model, np.zeros((1, 2))).tolist() == [1]
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 3)))


def test_predictions_invariant_to_row_order(rng):
    X = rng.normal(size=(50, 2))
    y = (X[:, 0] ** 2 + X[:, 1] > 0.5).astype(int)
    params = svm.SvmParams(cost=1.0, kernel_gamma=0.5, tolerance=1e-8)
    grid = rng.normal(size=(200, 2))
    a = svm.fit(X, y, params)
    perm = rng.permutation(50)
    b = svm.fit(X[perm], y[perm], params)
    fa, fb = a.decision_function(grid), b.decision_function(grid)
    assert np.allclose(fa, fb, atol=1e-5)
    clear = np.abs(fa) > 1e-4
    assert np.array_equal(a.predict(grid)[clear], b.predict(grid)[clear])


def test_record_roundtrip(rng):
    X, y = blobs(rng)
    model = svm.fit(X, y, svm.SvmParams())
    back = svm.from_records(svm.to_records(model))
    assert np.array_equal(back.decision_function(X), model.decision_function(X))
    assert back.converged == model.converged
