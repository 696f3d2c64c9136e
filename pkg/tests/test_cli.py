"""
End-to-end tests of the survival-ee command line
"""

import json

import numpy as np
import pandas as pd
import pytest

import survival_ee.main as cli
from conftest import make_cohort
from survival_ee.main import run
from survival_ee.simulation.data_generation import generate_cohort
from survival_ee.utils.constants import METRICS_COLUMNS, RISK_CURVE_COLUMNS


@pytest.fixture
def cohort_csv(tmp_path):
    dataset = make_cohort(120, 31, p=1, treatment=True)
    path = tmp_path / 'cohort.csv'
    pd.DataFrame({
        'id': dataset.unit_id,
        'time': dataset.observed_time,
        'event': dataset.event,
        'x0': dataset.covariates[:, 0],
        'a': dataset.treatment,
    }).to_csv(path, index=False)
    return path


def _data_flags(path):
    return ['--input', str(path), '--id-col', 'id', '--time-col', 'time', '--event-col', 'event',
            '--covariate-cols', 'x0']


def test_missing_required_flag_is_a_usage_error(cohort_csv, tmp_path):
    assert run(['gcomp', '--input', str(cohort_csv), '--time-col', 'time', '--treatment-col', 'a']) == 2
    assert run([]) == 2
    assert not (tmp_path / 'out').exists()


def test_invalid_flag_values_are_usage_errors(cohort_csv, tmp_path):
    out = ['--output-dir', str(tmp_path / 'out')]
    flags = _data_flags(cohort_csv) + ['--treatment-col', 'a'] + out
    assert run(['gcomp', *flags, '--variance', 'bootstrap:20']) == 2
    assert run(['gcomp', *flags, '--variance', 'jackknife']) == 2
    assert run(['gcomp', *flags, '--time-model', 'spline']) == 2
    assert run(['gcomp', *flags, '--tol', '0']) == 2
    assert run(['gcomp', *flags, '--jac-step', '-1e-5']) == 2
    assert run(['gcomp', *flags, '--interact-treatment']) == 2
    assert run(['gcomp', *_data_flags(cohort_csv), *out]) == 2


def test_fit_writes_coefficients(cohort_csv, tmp_path):
    out = tmp_path / 'fit'
    assert run(['fit', *_data_flags(cohort_csv), '--time-model', 'loglinear', '--output-dir', str(out),
                '--log-level', 'WARNING']) == 0
    coefficients = pd.read_csv(out / 'coefficients.csv')
    assert coefficients.parameter.tolist() == ['x0', 'S:intercept', 'S:log_t']
    assert (out / 'covariance.csv').exists()
    summary = json.loads((out / 'fit.json').read_text())
    assert summary['diagnostics']['converged'] is True
    assert summary['config']['time_model'] == 'loglinear'


def test_gcomp_writes_risk_curve(cohort_csv, tmp_path):
    out = tmp_path / 'gcomp'
    code = run(['gcomp', *_data_flags(cohort_csv), '--treatment-col', 'a', '--time-model', 'linear',
                '--target-times', '3,6,9', '--dump-covariance', '--output-dir', str(out)])
    assert code == 0
    curve = pd.read_csv(out / 'risk_curve.csv')
    assert list(curve.columns) == RISK_CURVE_COLUMNS
    assert curve.time.tolist() == [3, 6, 9]
    pd.testing.assert_series_equal(curve.rd, curve.risk1 - curve.risk0, check_names=False, atol=1e-12)

    summary = json.loads((out / 'summary.json').read_text())
    assert summary['time'] == 9
    assert summary['rd'] == pytest.approx(curve.rd.iloc[-1])
    assert summary['variance'] == 'sandwich'
    assert set(summary['diagnostics']) == {'a=1', 'a=0'}
    covariance = pd.read_csv(out / 'covariance.csv', index_col=0)
    assert 'rd@9' in covariance.columns


def test_gcomp_bootstrap(cohort_csv, tmp_path):
    out = tmp_path / 'boot'
    code = run(['gcomp', *_data_flags(cohort_csv), '--treatment-col', 'a', '--target-times', '6',
                '--variance', 'bootstrap:20', '--seed', '3', '--output-dir', str(out)])
    assert code == 0
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['variance'] == 'bootstrap'
    assert summary['bootstrap']['replicates'] == 20
    assert len(summary['bootstrap']['percentile_rd']) == 1


def test_computational_failure_exit_code(tmp_path):
    path = tmp_path / 'censored.csv'
    pd.DataFrame({'time': [1, 2, 3, 4], 'event': [0, 0, 0, 0], 'a': [1, 0, 1, 0]}).to_csv(path, index=False)
    code = run(['gcomp', '--input', str(path), '--time-col', 'time', '--event-col', 'event',
                '--treatment-col', 'a', '--output-dir', str(tmp_path / 'out')])
    assert code == 1

    missing = run(['fit', '--input', str(tmp_path / 'absent.csv'), '--time-col', 'time', '--event-col', 'event',
                   '--output-dir', str(tmp_path / 'out')])
    assert missing == 1


def test_simulate_small_config(tmp_path):
    config = tmp_path / 'sim.json'
    config.write_text(json.dumps({'sample_sizes': [100], 'iterations': 2, 'target_times': [10],
                                  'time_models': ['linear'], 'truth_draws': 20000}))
    out = tmp_path / 'sim'
    assert run(['simulate', '--output-dir', str(out), '--config', str(config)]) == 2
    assert run(['simulate', '--seed', '3', '--output-dir', str(out), '--config', str(config)]) == 0
    metrics = pd.read_csv(out / 'metrics.csv')
    assert list(metrics.columns) == METRICS_COLUMNS
    assert len(metrics) == 1
    summary = json.loads((out / 'simulate.json').read_text())
    assert summary['simulation']['seed'] == 3
    assert summary['simulation']['iterations'] == 2


def test_fit_with_jacobian_step(cohort_csv, tmp_path):
    default, custom = tmp_path / 'default', tmp_path / 'custom'
    assert run(['fit', *_data_flags(cohort_csv), '--output-dir', str(default)]) == 0
    assert run(['fit', *_data_flags(cohort_csv), '--jac-step', '1e-5', '--output-dir', str(custom)]) == 0
    summary = json.loads((custom / 'fit.json').read_text())
    assert summary['config']['jac_step'] == 1e-5
    first = pd.read_csv(default / 'coefficients.csv')
    second = pd.read_csv(custom / 'coefficients.csv')
    np.testing.assert_allclose(second.estimate, first.estimate, atol=1e-6)
    np.testing.assert_allclose(second.se, first.se, rtol=1e-4)


def test_gcomp_bootstrap_at_every_event_time(cohort_csv, tmp_path):
    """Without --target-times the bootstrap reports at the full-sample event times"""
    out = tmp_path / 'boot_all'
    code = run(['gcomp', *_data_flags(cohort_csv), '--treatment-col', 'a', '--variance', 'bootstrap:20',
                '--seed', '4', '--output-dir', str(out)])
    assert code == 0
    curve = pd.read_csv(out / 'risk_curve.csv')
    summary = json.loads((out / 'summary.json').read_text())
    assert len(summary['bootstrap']['percentile_rd']) == len(curve)
    assert curve.se_rd.notna().all()


@pytest.mark.parametrize('error', [np.linalg.LinAlgError('Singular matrix'), ValueError('array must not contain infs'),
                                   FloatingPointError('overflow')])
def test_numerical_errors_exit_with_one(cohort_csv, tmp_path, monkeypatch, error):
    def broken(*args, **kwargs):
        raise error

    monkeypatch.setattr(cli, 'fit_pooled_logistic', broken)
    assert run(['fit', *_data_flags(cohort_csv), '--output-dir', str(tmp_path / 'out')]) == 1


def test_benchmark_writes_timing_table(cohort_csv, tmp_path):
    out = tmp_path / 'bench'
    code = run(['benchmark', *_data_flags(cohort_csv), '--treatment-col', 'a', '--replicates', '2',
                '--seed', '1', '--output-dir', str(out)])
    assert code == 0
    table = pd.read_csv(out / 'benchmark.csv')
    assert list(table.columns) == ['method', 'seconds', 'predicted_elements', 'predicted_bytes', 'peak_bytes']
    assert table.method.tolist() == ['ee_vectorized', 'ee_loop', 'standard_point', 'standard_bootstrap_sequence']
    measured = table.iloc[:3]
    assert (measured.peak_bytes > 0).all()
    assert (measured.predicted_bytes == 8 * measured.predicted_elements).all()
    assert table.peak_bytes.isna().iloc[3]
    summary = json.loads((out / 'benchmark.json').read_text())
    assert summary['problem']['n'] == 120


@pytest.mark.slow
def test_estimating_equations_beat_long_data_bootstrap(tmp_path):
    """The sandwich fit runs at least ten times faster than a 100-replicate long-data bootstrap"""
    dataset = generate_cohort(1000, 99).dataset
    path = tmp_path / 'cohort.csv'
    pd.DataFrame({
        'time': dataset.observed_time,
        'event': dataset.event,
        'w': dataset.covariates[:, 0],
        'a': dataset.treatment,
    }).to_csv(path, index=False)
    out = tmp_path / 'bench'
    code = run(['benchmark', '--input', str(path), '--time-col', 'time', '--event-col', 'event',
                '--covariate-cols', 'w', '--treatment-col', 'a', '--time-model', 'disjoint',
                '--replicates', '100', '--seed', '2', '--output-dir', str(out)])
    assert code == 0
    seconds = pd.read_csv(out / 'benchmark.csv').set_index('method').seconds
    assert seconds['standard_bootstrap_sequence'] >= 10 * seconds['ee_vectorized']
