import numpy as np
import pytest

from conftest import random_dataset
from oracles import normal_equations_2

from ivtrans import CaseSpec, SurvivalDataset, estimate_Q, generate_case, impute_design
from ivtrans.errors import InsufficientDataError, ShapeError, SingularDesignError, ValidationError
from ivtrans.simulate import calibrated


def ds(Z, W, n=None):
    n = len(Z)
    return SurvivalDataset(np.arange(1.0, n + 1), np.ones(n, int), Z, W)


def test_exact_fit():
    fit = estimate_Q(ds([[3.0], [6.0], [9.0]], [[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(fit.Q_hat, [[3.0]], atol=1e-14)
    np.testing.assert_allclose(fit.sigma_eta_sq, [0.0], atol=1e-24)
    np.testing.assert_array_equal(fit.imputed_design, np.array([[1.0], [2.0], [3.0]]) @ fit.Q_hat)


def test_zero_surrogates_give_zero_Q(rng):
    fit = estimate_Q(ds(np.zeros((10, 1)), rng.random((10, 2))))
    np.testing.assert_array_equal(fit.Q_hat, np.zeros((2, 1)))


def test_matches_explicit_normal_equations(rng):
    W = rng.normal(size=(20, 2))
    Z = rng.normal(size=(20, 1))
    fit = estimate_Q(ds(Z, W))
    np.testing.assert_allclose(fit.Q_hat, normal_equations_2(W, Z), atol=1e-10)


def test_residuals_orthogonal_and_variance(rng):
    data = random_dataset(rng, 60, p=2, q=3)
    fit = estimate_Q(data)
    R = data.Z - fit.imputed_design
    assert np.linalg.norm(data.W.T @ R) <= 1e-8 * np.linalg.norm(data.W.T @ data.Z)
    np.testing.assert_allclose(fit.sigma_eta_sq, (R ** 2).sum(axis=0) / (60 - 3), rtol=1e-12)
    g = fit.gram_inverse
    np.testing.assert_array_equal(g, g.T)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    np.testing.assert_allclose(g @ (data.W.T @ data.W), np.eye(3), atol=1e-9)


def test_scaling_equivariance(rng):
    data = random_dataset(rng, 40, p=1, q=2)
    scaled = SurvivalDataset(data.times, data.status, 2.5 * data.Z, data.W)
    a, b = estimate_Q(data), estimate_Q(scaled)
    np.testing.assert_allclose(b.Q_hat, 2.5 * a.Q_hat, rtol=1e-13)
    np.testing.assert_allclose(b.sigma_eta_sq, 6.25 * a.sigma_eta_sq, rtol=1e-12)


def test_singular_design_rejected(rng):
    w = rng.random((10, 1))
    with pytest.raises(SingularDesignError) as info:
        estimate_Q(ds(rng.random((10, 1)), np.hstack([w, 2 * w])))
    assert info.value.rcond < 1e-12
    assert "condition number" in str(info.value)


def test_insufficient_rows():
    with pytest.raises(InsufficientDataError):
        estimate_Q(ds([[1.0], [2.0]], [[1.0, 0.0], [0.0, 1.0]]))


def test_impute_design():
    fit = estimate_Q(ds([[3.0], [6.0], [9.0]], [[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(impute_design(fit, [[1.0], [2.0]]), [[3.0], [6.0]])
    with pytest.raises(ShapeError):
        impute_design(fit, np.ones((2, 2)))


def test_impute_identity_and_loop_oracle(rng):
    W = rng.normal(size=(12, 2))
    Q = np.eye(2)
    data = ds(W @ Q, W)
    fit = estimate_Q(data)
    W_new = rng.normal(size=(5, 2))
    np.testing.assert_allclose(impute_design(fit, W_new), W_new, atol=1e-12)
    Qh = fit.Q_hat
    loop = np.array([[sum(W_new[i, k] * Qh[k, j] for k in range(2)) for j in range(2)] for i in range(5)])
    np.testing.assert_allclose(impute_design(fit, W_new), loop, atol=1e-12)


def test_dataset_requires_enough_instruments():
    with pytest.raises(ValidationError, match="q >= p required"):
        SurvivalDataset([1.0, 2.0, 3.0], [1, 0, 1], np.ones((3, 2)), np.ones((3, 1)))


def _Q_draws(n, reps):
    spec = calibrated(CaseSpec.for_case("i", n, 1.0, reps=reps, seed=11))
    return np.array([estimate_Q(generate_case(spec, i).dataset).Q_hat[0, 0] for i in range(reps)])


def test_Q_hat_unbiased_at_n200():
    q = _Q_draws(200, 1000)
    se = q.std(ddof=1) / np.sqrt(q.size)
    assert abs(q.mean() - 3.0) <= 3 * se


def test_Q_hat_root_n_rate():
    ratio = _Q_draws(100, 600).std(ddof=1) / _Q_draws(400, 600).std(ddof=1)
    assert 1.7 <= ratio <= 2.3
