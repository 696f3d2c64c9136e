"""
Tests for the simulated cohorts, the potential-outcome truth and the Monte Carlo study
"""

import json

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest

from survival_ee.simulation.data_generation import generate_cohort, true_effect
from survival_ee.simulation.monte_carlo import SimConfig, run_experiment, summarize
from survival_ee.utils.constants import METRICS_COLUMNS
from survival_ee.utils.exceptions import DataValidationError, SchemaError


def test_cohort_invariants():
    cohort = generate_cohort(400, 3)
    dataset = cohort.dataset
    assert dataset.n == 400
    assert np.all((cohort.W > -1) & (cohort.W < 1))
    assert set(np.unique(cohort.A)) <= {0, 1}
    assert np.all(cohort.T1 >= 1) and np.all(cohort.T0 >= 1) and np.all(cohort.C >= 1)
    npt.assert_array_equal(dataset.observed_time, np.minimum(cohort.T, cohort.C))
    npt.assert_array_equal(dataset.event, (cohort.T <= cohort.C).astype(int))
    npt.assert_array_equal(dataset.treatment, cohort.A)
    assert dataset.covariate_names == ('W',)
    assert dataset.K == dataset.observed_time.max()


def test_confounding_direction():
    """Treatment is less likely at high W"""
    cohort = generate_cohort(5000, 8)
    assert cohort.W[cohort.A == 1].mean() < cohort.W[cohort.A == 0].mean()


def test_cohorts_are_reproducible():
    first, second = generate_cohort(50, [1, 50, 7]), generate_cohort(50, [1, 50, 7])
    npt.assert_array_equal(first.W, second.W)
    npt.assert_array_equal(first.dataset.observed_time, second.dataset.observed_time)
    other = generate_cohort(50, [1, 50, 8])
    assert not np.array_equal(first.W, other.W)

    with pytest.raises(DataValidationError, match="cohort size"):
        generate_cohort(0, 1)


def test_true_effect_limits():
    assert true_effect(0, n_draws=20_000) == 0.0
    assert true_effect(-3, n_draws=20_000) == 0.0
    effects = [true_effect(t, n_draws=20_000) for t in (5, 10, 20, 30)]
    assert all(-1 < rd < 1 for rd in effects)
    assert true_effect(100_000, n_draws=20_000) == pytest.approx(0.0)
    assert true_effect(10, n_draws=20_000) == true_effect(10, n_draws=20_000)


def test_summarize_metrics():
    records = pd.DataFrame([
        {'n': 50, 'iteration': 0, 'time_model': 'linear', 'failed': False, 't': 10,
         'rd': 0.1, 'se': 0.05, 'lower': 0.0, 'upper': 0.2, 'iterations': 6},
        {'n': 50, 'iteration': 1, 'time_model': 'linear', 'failed': False, 't': 10,
         'rd': 0.3, 'se': 0.07, 'lower': 0.25, 'upper': 0.35, 'iterations': 8},
        {'n': 50, 'iteration': 2, 'time_model': 'linear', 'failed': True},
        {'n': 50, 'iteration': 0, 'time_model': 'disjoint', 'failed': True},
        {'n': 50, 'iteration': 1, 'time_model': 'disjoint', 'failed': True},
        {'n': 50, 'iteration': 2, 'time_model': 'disjoint', 'failed': True},
    ])
    metrics = summarize(records, {10: 0.15}, iterations=3)
    assert list(metrics.columns) == METRICS_COLUMNS

    linear = metrics[metrics.time_model == 'linear'].iloc[0]
    assert linear.bias == pytest.approx(0.05)
    assert linear.ese == pytest.approx(np.std([0.1, 0.3], ddof=1))
    assert linear.ase == pytest.approx(0.06)
    assert linear.ser == pytest.approx(0.06 / np.std([0.1, 0.3], ddof=1))
    assert linear.coverage == pytest.approx(0.5)
    assert linear.iterations == pytest.approx(7.0)
    assert linear.failures == 1

    disjoint = metrics[metrics.time_model == 'disjoint'].iloc[0]
    assert disjoint.failures == 3
    assert np.isnan(disjoint.bias)


def test_config_validation(tmp_path):
    with pytest.raises(SchemaError, match="iterations"):
        SimConfig(iterations=0)
    with pytest.raises(SchemaError, match="Unknown time models"):
        SimConfig(time_models=('cubic',))
    assert SimConfig(time_models=('loglinear',), sample_sizes=100).time_models == ('log_linear',)

    with pytest.raises(SchemaError, match="File not found"):
        SimConfig.from_json(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"iterations": ')
    with pytest.raises(SchemaError, match="Invalid JSON"):
        SimConfig.from_json(broken)
    unknown = tmp_path / 'unknown.json'
    unknown.write_text(json.dumps({'iterations': 5, 'replicates': 3}))
    with pytest.raises(SchemaError, match="replicates"):
        SimConfig.from_json(unknown)

    valid = tmp_path / 'valid.json'
    valid.write_text(json.dumps({'sample_sizes': [100, 200], 'iterations': 4, 'target_times': [10]}))
    config = SimConfig.from_json(valid)
    assert config.sample_sizes == (100, 200)
    assert config.target_times == (10,)
    assert config.to_dict()['iterations'] == 4


def test_spec_for_time_models():
    config = SimConfig(iterations=1)
    assert config.spec_for('spline').time_spec.knots == (5.0, 10.0, 15.0, 20.0, 25.0)
    assert config.spec_for('linear').time_spec.knots == ()
    assert config.spec_for('linear').covariate_design.splines == {'W': (-0.8, 0.0, 0.8)}


def test_small_experiment_layout():
    config = SimConfig(sample_sizes=(200,), iterations=3, target_times=(10, 20),
                       time_models=('linear', 'log_linear'), truth_draws=50_000, seed=4)
    metrics = run_experiment(config)
    assert list(metrics.columns) == METRICS_COLUMNS
    assert len(metrics) == 4
    assert set(metrics.time_model) == {'linear', 'log_linear'}
    assert set(metrics.t) == {10, 20}
    assert np.all(metrics.failures == 0)
    assert np.all(metrics.iterations > 0)

    again = run_experiment(config)
    pd.testing.assert_frame_equal(metrics, again)


@pytest.mark.slow
def test_time_model_bias():
    """Flexible time is close to unbiased while a constant hazard is biased downward"""
    config = SimConfig(sample_sizes=(500,), iterations=100, target_times=(10, 20),
                       time_models=('disjoint', 'intercept_only'), seed=2024)
    metrics = run_experiment(config)
    disjoint = metrics[metrics.time_model == 'disjoint']
    assert np.all(np.abs(disjoint.bias) < 0.02)
    assert np.all(disjoint.coverage >= 0.85)
    constant = metrics[(metrics.time_model == 'intercept_only') & (metrics.t == 10)]
    assert constant.bias.iloc[0] < -0.03


@pytest.mark.slow
def test_correct_time_models_are_calibrated():
    """Correctly specified time at n=500: near-zero bias, SER near 1 and nominal coverage"""
    config = SimConfig(sample_sizes=(500,), iterations=1000, target_times=(10, 20, 30),
                       time_models=('log_linear', 'spline', 'disjoint', 'linear'), seed=7, jobs=-1)
    metrics = run_experiment(config)
    correct = metrics[metrics.time_model != 'linear']
    assert len(correct) == 9
    assert np.all(np.abs(correct.bias) <= 0.01)
    assert np.all(correct.ser.between(0.9, 1.1))
    assert np.all(correct.coverage.between(0.93, 0.97))
    # a linear hazard in time overstates the effect by about two points at t=20
    linear = metrics[(metrics.time_model == 'linear') & (metrics.t == 20)]
    assert 0.01 < linear.bias.iloc[0] < 0.035
