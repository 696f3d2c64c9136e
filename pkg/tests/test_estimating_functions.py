"""
Tests for the pooled logistic estimating functions

Covers the worked six-unit example, agreement with the long-data score and
IRLS fit, loop versus vectorized kernels and the memory model.
"""

import tracemalloc

import numpy as np
import numpy.testing as npt
import pytest

from conftest import WORKED_DISJOINT_STACK, WORKED_SMOOTH_STACK, make_cohort
from survival_ee.core.estimating_functions import (
    PooledLogisticEE,
    estimate_elements,
    hazard_matrix,
    resolve_mode,
    risk_ef,
    risks_at_times,
    score_stack,
    survival_from_hazards,
)
from survival_ee.core.gcomp import fit_pooled_logistic
from survival_ee.core.time_design import build_design
from survival_ee.models.design import TimeDesignSpec
from survival_ee.models.results import HazardMatrix
from survival_ee.standard.long_data import expand_long, fit_long_logistic, long_score
from survival_ee.utils.constants import DISJOINT_FLOOR
from survival_ee.utils.exceptions import DesignError

FORMS = [
    TimeDesignSpec('intercept_only'),
    TimeDesignSpec('linear'),
    TimeDesignSpec('log_linear'),
    TimeDesignSpec('spline', (3, 6, 9)),
    TimeDesignSpec('disjoint'),
]


def _design(spec, dataset):
    return build_design(spec, dataset.unique_event_times, grid=dataset.grid)


def test_worked_example_smooth_stack(worked_dataset, linear_design):
    """Linear time at beta_X = 0.2, beta_S = (-1, 0.1) reproduces the worked stack"""
    stack = score_stack(worked_dataset, linear_design, [0.2, -1.0, 0.1])
    npt.assert_allclose(stack.matrix, WORKED_SMOOTH_STACK, atol=5e-4)
    assert stack.block('beta_s').shape == (2, 6)


def test_worked_example_smooth_hazards(worked_dataset, linear_design):
    model = PooledLogisticEE(worked_dataset, linear_design, mode='vectorized')
    hazards = model.hazards(np.array([0.2, -1.0, 0.1]))
    assert hazards.shape == (5, 6)
    assert round(hazards.values[0, 0], 3) == 0.250
    assert round(hazards.values[4, 5], 3) == 0.289


def test_worked_example_disjoint_stack(worked_dataset, disjoint_design):
    """Disjoint indicators: the time rows of the stack are the residual matrix itself"""
    stack = score_stack(worked_dataset, disjoint_design, [0.2, -1.0, 0.1, -0.1])
    npt.assert_allclose(stack.matrix, WORKED_DISJOINT_STACK, atol=5e-4)


@pytest.mark.parametrize('design_name', ['linear', 'disjoint'])
def test_worked_example_loop_matches_vectorized(worked_dataset, linear_design, disjoint_design, design_name):
    design = linear_design if design_name == 'linear' else disjoint_design
    beta = [0.2, -1.0, 0.1] if design_name == 'linear' else [0.2, -1.0, 0.1, -0.1]
    vectorized = score_stack(worked_dataset, design, beta, mode='vectorized').matrix
    loop = score_stack(worked_dataset, design, beta, mode='loop').matrix
    npt.assert_allclose(loop, vectorized, rtol=0, atol=1e-14)


@pytest.mark.parametrize('spec', FORMS, ids=str)
@pytest.mark.parametrize('weights', [None, 'unit', 'unit_time'])
def test_score_matches_long_data_score(spec, weights):
    """Row sums of the stacked score equal the person-period logistic score"""
    for seed in range(15):
        rng = np.random.default_rng(1000 + seed)
        p = int(rng.integers(1, 4))
        dataset = make_cohort(int(rng.integers(10, 51)), seed, p=p, weights=weights)
        if dataset.n_events == 0:
            continue
        design = _design(spec, dataset)
        beta = rng.normal(scale=0.3, size=p + design.q)
        stack = score_stack(dataset, design, beta)
        expected = long_score(expand_long(dataset, design=design), beta)

        npt.assert_allclose(stack.block('beta_x').sum(axis=1), expected[:p], rtol=0, atol=1e-10)
        time_rows = stack.block('beta_s').sum(axis=1)
        if design.rows_are_unique_event_times:
            time_rows = design.matrix.T @ time_rows
        npt.assert_allclose(time_rows, expected[p:], rtol=0, atol=1e-10)


@pytest.mark.parametrize('spec', FORMS, ids=str)
def test_loop_matches_vectorized(spec):
    for seed in range(10):
        dataset = make_cohort(40, seed, p=2, weights='unit_time' if seed % 2 else None)
        design = _design(spec, dataset)
        beta = np.random.default_rng(seed).normal(scale=0.3, size=2 + design.q)
        vectorized = score_stack(dataset, design, beta, mode='vectorized').matrix
        loop = score_stack(dataset, design, beta, mode='loop').matrix
        npt.assert_allclose(loop, vectorized, rtol=1e-14, atol=1e-14 * np.abs(vectorized).max())


def test_loop_matches_vectorized_with_treatment_block():
    dataset = make_cohort(40, 3, p=1, treatment=True)
    design = _design(TimeDesignSpec('linear'), dataset)
    beta = np.array([0.2, -2.0, 0.05, -0.02])
    vectorized = score_stack(dataset, design, beta, mode='vectorized', time_modifier=dataset.treatment)
    loop = score_stack(dataset, design, beta, mode='loop', time_modifier=dataset.treatment)
    # the modified block has no intercept column
    assert vectorized.block('beta_sa').shape == (1, 40)
    npt.assert_allclose(loop.matrix, vectorized.matrix, rtol=1e-14, atol=1e-14 * np.abs(vectorized.matrix).max())
    untreated = dataset.treatment == 0
    npt.assert_allclose(vectorized.block('beta_sa')[:, untreated], 0.0)


@pytest.mark.parametrize('spec', FORMS, ids=str)
def test_root_matches_irls(spec):
    """beta_hat from the estimating equations equals the long-data MLE"""
    for seed in range(4):
        dataset = make_cohort(60, 50 + seed, p=2, weights='unit' if seed % 2 else None)
        fit = fit_pooled_logistic(dataset, time_spec=spec, mode='vectorized', compute_covariance=False)
        oracle = fit_long_logistic(expand_long(dataset, design=fit.time_design))
        npt.assert_allclose(fit.beta[fit.free], oracle.beta[fit.free], rtol=0, atol=1e-6)
        # intervals where every unit at risk fails have no finite MLE
        assert np.all(fit.beta[~fit.free] == -DISJOINT_FLOOR)
        assert np.all(oracle.beta[~fit.free] > 10)


def test_intercept_only_closed_form(worked_dataset):
    """Constant hazard without covariates: logit(events / person-periods)"""
    bare = worked_dataset.with_covariates(np.empty((6, 0)), [])
    fit = fit_pooled_logistic(bare, time_spec=TimeDesignSpec('intercept_only'))
    npt.assert_allclose(fit.beta, [np.log(3 / 15)], atol=1e-8)


def test_zero_residual_outside_risk_set(worked_dataset, linear_design):
    model = PooledLogisticEE(worked_dataset, linear_design, mode='vectorized')
    stack = model(np.array([0.2, -1.0, 0.1]))
    # unit 1 only contributes its first interval
    hazard = model.hazards(np.array([0.2, -1.0, 0.1])).values[0, 0]
    npt.assert_allclose(stack[1:, 0], [1 - hazard, 1 - hazard])


def test_model_rejects_bad_inputs(worked_dataset, linear_design):
    with pytest.raises(DesignError, match="weights"):
        PooledLogisticEE(worked_dataset, linear_design, weights=np.ones((3, 6)))
    model = PooledLogisticEE(worked_dataset, linear_design)
    with pytest.raises(DesignError, match="parameters"):
        model(np.zeros(2))


def test_estimate_elements_formulas():
    n, K, K_star, p, q = 1000, 365, 40, 4, 5
    assert estimate_elements(n, K, K_star, p, q, 'standard') == (p + q + 1) * K * n
    assert estimate_elements(n, K, K_star, p, q, 'vectorized') == n + 5 * K * n + K * q
    assert estimate_elements(n, K, K_star, p, q, 'vectorized_disjoint') == n + 5 * K_star * n + K_star * q
    assert estimate_elements(n, K, K_star, p, q, 'loop') == n * (p + q + 3)
    assert estimate_elements(n, K, K_star, p, q, 'vectorized') < estimate_elements(n, K, K_star, p, q, 'standard')
    with pytest.raises(ValueError):
        estimate_elements(n, K, K_star, p, q, 'sparse')


def test_auto_mode_respects_budget(linear_design):
    assert resolve_mode('auto', 6, linear_design, 1) == 'vectorized'
    assert resolve_mode('auto', 6, linear_design, 1, memory_budget=16) == 'loop'
    assert resolve_mode('loop', 6, linear_design, 1) == 'loop'
    with pytest.raises(ValueError):
        resolve_mode('gpu', 6, linear_design, 1)


def test_risks_carry_forward_between_rows():
    """Risk is 0 before the first row and constant between rows"""
    hazards = HazardMatrix(np.array([[0.1, 0.5], [0.2, 0.5]]), np.array([2, 4]))
    risks = risks_at_times(hazards, [1, 2, 3, 4, 5])
    npt.assert_allclose(risks[:, 0], [0.0, 0.1, 0.1, 1 - 0.9 * 0.8, 1 - 0.9 * 0.8])
    npt.assert_allclose(risks[:, 1], [0.0, 0.5, 0.5, 0.75, 0.75])
    npt.assert_allclose(survival_from_hazards(hazards)[:, 1], [0.5, 0.25])


def test_risk_ef_centres_on_gamma(worked_dataset, linear_design):
    hazards = hazard_matrix(np.full(6, 0.2) * np.array([-1, 1, -1, 0, 2, -2]), linear_design, np.array([-1.0, 0.1]))
    risks = risks_at_times(hazards, [3, 5])
    gamma = risks.mean(axis=1)
    npt.assert_allclose(risk_ef(hazards, [3, 5], gamma).sum(axis=1), 0.0, atol=1e-14)
    assert np.all(np.diff(risks, axis=0) >= 0)
    with pytest.raises(DesignError):
        risk_ef(hazards, [3, 5], [0.1])


def test_survival_limits():
    constant = HazardMatrix(np.full((5, 3), 0.5), np.arange(1, 6))
    npt.assert_allclose(survival_from_hazards(constant)[:, 0], 0.5 ** np.arange(1, 6))
    negligible = HazardMatrix(np.full((5, 3), 1e-12), np.arange(1, 6))
    npt.assert_allclose(risks_at_times(negligible, [1, 5]), 0.0, atol=1e-10)


def test_bounded_hazards_at_the_floor(disjoint_design):
    """Extreme logits never give hazards of exactly 0 or 1"""
    beta_s = np.array([DISJOINT_FLOOR, 0.0, 0.0, 0.0])
    low = hazard_matrix(np.full(6, -400.0), disjoint_design, beta_s)
    assert np.all(low.values > 0)
    high = hazard_matrix(np.full(6, 1000.0), disjoint_design, -beta_s)
    assert np.all(high.values < 1)
    assert np.all(survival_from_hazards(high) > 0)


def test_modified_block_rejects_intercept_length(worked_dataset, linear_design):
    with pytest.raises(DesignError, match="beta_SA"):
        hazard_matrix(np.zeros(6), linear_design, np.array([-1.0, 0.1]), np.ones(6), np.zeros(2))


def test_loop_mode_keeps_no_interval_matrices():
    dataset = make_cohort(2000, 11, p=1, K=400, weights='unit_time')
    design = build_design(TimeDesignSpec('linear'), grid=dataset.grid)
    beta = np.array([0.4, -3.0, 0.01])
    tracemalloc.start()
    try:
        model = PooledLogisticEE(dataset, design, mode='loop')
        model(beta)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert model.indicators is None and model.weights is None
    assert peak < design.n_rows * dataset.n * 8 / 4
