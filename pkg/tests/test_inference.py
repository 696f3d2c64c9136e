"""
Tests for bread, meat, sandwich covariance and Wald intervals
"""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.special import expit

from survival_ee.core.inference import bread, meat, sandwich, wald_ci
from survival_ee.core.solver import solve_roots
from survival_ee.models.results import EFStack
from survival_ee.utils.exceptions import InferenceError

#fixed 20-row logistic regression instance
X = np.column_stack([np.ones(20), np.linspace(-2.0, 2.0, 20)])
Y = np.array([0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1], dtype=float)


def _stack(theta):
    return (X * (Y - expit(X @ theta))[:, None]).T


def _mean(theta):
    return _stack(theta).mean(axis=1)


def test_sandwich_matches_hand_coded_logistic():
    """Numerical bread and EF meat reproduce the analytic B^-1 F B^-T / n"""
    theta_hat, _ = solve_roots(_mean, np.zeros(2))
    n = X.shape[0]

    p = expit(X @ theta_hat)
    B = (X * (p * (1 - p))[:, None]).T @ X / n
    psi = _stack(theta_hat)
    F = psi @ psi.T / n
    B_inv = np.linalg.inv(B)
    expected = B_inv @ F @ B_inv.T / n

    result = sandwich(bread(_mean, theta_hat), meat(psi), n, ['intercept', 'x'])
    npt.assert_allclose(result.bread, B, rtol=1e-6)
    npt.assert_allclose(result.covariance, expected, rtol=1e-6)
    npt.assert_allclose(result.se, np.sqrt(np.diag(expected)), rtol=1e-6)


def test_sandwich_sign_invariant():
    """Negating the bread leaves the covariance unchanged"""
    theta_hat, _ = solve_roots(_mean, np.zeros(2))
    B = bread(_mean, theta_hat)
    F = meat(_stack(theta_hat))
    npt.assert_allclose(sandwich(-B, F, 20).covariance, sandwich(B, F, 20).covariance, rtol=1e-12)


def test_meat_is_symmetric_mean_outer_product():
    rng = np.random.default_rng(3)
    psi = rng.normal(size=(3, 50))
    F = meat(EFStack(psi, {'theta': slice(0, 3)}))
    npt.assert_allclose(F, F.T)
    npt.assert_allclose(F, psi @ psi.T / 50)


def test_singular_bread_raises_with_directions():
    with pytest.raises(InferenceError) as info:
        sandwich(np.zeros((2, 2)), np.eye(2), 10, ['a', 'b'])
    assert info.value.directions == ['a', 'b']


def test_wald_ci_scalar_and_array():
    lower, upper = wald_ci(1.0, 0.5)
    assert isinstance(lower, float)
    npt.assert_allclose([lower, upper], [1.0 - 1.959964 * 0.5, 1.0 + 1.959964 * 0.5], atol=1e-6)

    lower, upper = wald_ci(np.array([0.0, 1.0]), np.array([1.0, 0.0]), level=0.90)
    npt.assert_allclose(lower, [-1.644854, 1.0], atol=1e-6)
    npt.assert_allclose(upper, [1.644854, 1.0], atol=1e-6)
    with pytest.raises(ValueError):
        wald_ci(0.0, 1.0, level=1.5)


def test_sample_mean_sandwich():
    """psi = x - mu gives B = 1 and the usual M-estimation standard error of the mean"""
    x = np.random.default_rng(3).normal(2.0, 1.5, 40)
    mu = x.mean()
    B = bread(lambda theta: np.array([np.mean(x - theta[0])]), [mu])
    npt.assert_allclose(B, [[1.0]], atol=1e-8)
    result = sandwich(B, meat((x - mu)[None, :]), x.size)
    npt.assert_allclose(result.se, [np.sqrt(np.sum((x - mu) ** 2) / x.size ** 2)], rtol=1e-7)


def test_single_unit_meat_has_rank_one():
    psi = np.array([[1.0], [2.0], [-0.5]])
    assert np.linalg.matrix_rank(meat(psi)) == 1


def test_bread_cross_derivatives_are_exactly_zero():
    """A location EF that ignores the second parameter has a zero cross-derivative"""
    x = np.arange(5.0)

    def ef_mean(theta):
        return np.array([np.mean(x - theta[0]), np.mean(x ** 2 - theta[1])])

    B = bread(ef_mean, [x.mean(), np.mean(x ** 2)])
    assert B[0, 1] == 0.0 and B[1, 0] == 0.0
