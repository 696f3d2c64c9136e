"""
Monte Carlo Study

Repeatedly draws cohorts, estimates the risk difference under every time
specification and summarizes bias, empirical and average standard errors,
their ratio and Wald coverage against the potential-outcome truth.
"""

import json
import logging
import multiprocessing as mp
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pathos.multiprocessing import ProcessPool as Pool

from survival_ee.core.gcomp import GComputationEstimator, GComputationSpec
from survival_ee.core.solver import SolverOptions
from survival_ee.models.design import CovariateDesign, TimeDesignSpec
from survival_ee.simulation.data_generation import generate_cohort, true_effect
from survival_ee.utils.constants import (
    DEFAULT_CI_LEVEL,
    METRICS_COLUMNS,
    SEPARATE_MODELS,
    SIM_CONFOUNDER_KNOTS,
    SIM_FAILURE_WARNING,
    SIM_TARGET_TIMES,
    SIM_TIME_KNOTS,
    SIM_TIME_MODELS,
    SIM_TRUTH_DRAWS,
    TIME_FORMS,
)
from survival_ee.utils.exceptions import SchemaError, SurvivalEEError

logger = logging.getLogger(__name__)

_RECORD_COLUMNS = ['n', 'iteration', 'time_model', 'failed', 't', 'rd', 'se', 'lower', 'upper', 'iterations']


@dataclass
class SimConfig:
    """
    Settings for one Monte Carlo study.

    Args:
        sample_sizes: Cohort sizes to study
        iterations: Cohorts drawn per sample size
        target_times: Times the risk difference is scored at
        time_models: Time specifications fitted to every cohort
        time_knots: Knots for the spline time form
        confounder_knots: Knots of the restricted cubic spline for W
        seed: Base seed; cohort i of size n uses the stream seeded by (seed, n, i)
        jobs: Worker processes over iterations
        truth_draws: Draws behind the potential-outcome truth
        ci_level: Wald interval level used for coverage
    """
    sample_sizes: Tuple[int, ...] = (500,)
    iterations: int = 1000
    target_times: Tuple[int, ...] = SIM_TARGET_TIMES
    time_models: Tuple[str, ...] = SIM_TIME_MODELS
    time_knots: Tuple[float, ...] = SIM_TIME_KNOTS
    confounder_knots: Tuple[float, ...] = SIM_CONFOUNDER_KNOTS
    seed: int = 0
    jobs: int = 1
    truth_draws: int = SIM_TRUTH_DRAWS
    ci_level: float = DEFAULT_CI_LEVEL
    solver_options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if isinstance(self.sample_sizes, int):
            self.sample_sizes = (self.sample_sizes,)
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        self.target_times = tuple(int(t) for t in self.target_times)
        self.time_models = tuple(TIME_FORMS.get(m, m) for m in self.time_models)
        self.time_knots = tuple(float(k) for k in self.time_knots)
        self.confounder_knots = tuple(float(k) for k in self.confounder_knots)
        if self.iterations < 1:
            raise SchemaError(f"iterations must be >= 1, got {self.iterations}")
        if not self.sample_sizes or min(self.sample_sizes) < 1:
            raise SchemaError(f"sample sizes must be positive: {self.sample_sizes}")
        unknown = [m for m in self.time_models if m not in TIME_FORMS.values()]
        if unknown:
            raise SchemaError(f"Unknown time models in config: {unknown}")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'SimConfig':
        """Read a config file whose keys are SimConfig field names"""
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"File not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Invalid JSON in {path.name}: {e}")
        if not isinstance(data, dict):
            raise SchemaError(f"{path.name} must hold a JSON object")
        known = set(cls.__dataclass_fields__) - {'solver_options'}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"Unknown keys in {path.name}: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['solver_options'] = asdict(self.solver_options)
        return data

    def spec_for(self, time_model: str) -> GComputationSpec:
        """G-computation spec for one time model: arms fitted separately, W as a cubic spline"""
        knots = self.time_knots if time_model == 'spline' else ()
        return GComputationSpec(
            time_spec=TimeDesignSpec(time_model, knots),
            covariate_design=CovariateDesign(terms=('W',), splines={'W': self.confounder_knots}, spline_power=3),
            arm_strategy=SEPARATE_MODELS,
            target_times=self.target_times,
            ci_level=self.ci_level,
            solver_options=self.solver_options,
            mode='vectorized',
        )


class _Iteration:
    """Fits every time model to cohort i of size n; picklable for worker processes"""

    def __init__(self, config: SimConfig, n: int):
        self.config = config
        self.n = n

    def __call__(self, i: int) -> List[Dict]:
        cohort = generate_cohort(self.n, [self.config.seed, self.n, i])
        records = []
        for time_model in self.config.time_models:
            try:
                curve = GComputationEstimator(self.config.spec_for(time_model)).fit(cohort.dataset)
            except (SurvivalEEError, np.linalg.LinAlgError) as e:
                logger.debug(f"n={self.n} iteration {i} {time_model} failed: {e}")
                records.append({'n': self.n, 'iteration': i, 'time_model': time_model, 'failed': True})
                continue
            iterations = sum(fit.diagnostics.iterations for fit in curve.fits.values())
            for k, t in enumerate(curve.times):
                records.append({
                    'n': self.n, 'iteration': i, 'time_model': time_model, 'failed': False, 't': int(t),
                    'rd': curve.rd[k], 'se': curve.se_rd[k],
                    'lower': curve.ci_rd[k, 0], 'upper': curve.ci_rd[k, 1], 'iterations': iterations,
                })
        return records


def _run_iterations(task: _Iteration, iterations: int, jobs: int) -> List[Dict]:
    if jobs <= 1:
        batches = [task(i) for i in range(iterations)]
    else:
        pool = Pool(jobs)
        try:
            pool.restart()
        except AssertionError:
            pass
        try:
            batches = pool.map(task, range(iterations))
        finally:
            pool.close()
            pool.join()
    return [record for batch in batches for record in batch]


def summarize(records: pd.DataFrame, truth: Dict[int, float], iterations: int) -> pd.DataFrame:
    """
    Aggregate per-iteration estimates into the metrics table.

    bias = mean(rd) - truth, ese = sd(rd), ase = mean(se), ser = ase / ese,
    coverage = share of Wald intervals holding the truth; failed iterations
    are excluded and counted.
    """
    rows = []
    mask = records['failed'].astype(bool)
    failed = records[mask].groupby(['n', 'time_model']).size()
    fitted = records[~mask]
    for (n, time_model, t), group in fitted.groupby(['n', 'time_model', 't'], sort=False):
        true_rd = truth[int(t)]
        ese = group['rd'].std(ddof=1) if len(group) > 1 else np.nan
        ase = group['se'].mean()
        rows.append({
            'n': n, 'time_model': time_model, 't': int(t),
            'bias': group['rd'].mean() - true_rd,
            'ese': ese,
            'ase': ase,
            'ser': ase / ese if ese and np.isfinite(ese) else np.nan,
            'coverage': ((group['lower'] <= true_rd) & (true_rd <= group['upper'])).mean(),
            'iterations': group['iterations'].mean(),
            'failures': int(failed.get((n, time_model), 0)),
        })
    for (n, time_model), count in failed.items():
        if count == iterations:
            rows.append({'n': n, 'time_model': time_model, 't': np.nan, 'bias': np.nan, 'ese': np.nan,
                         'ase': np.nan, 'ser': np.nan, 'coverage': np.nan, 'iterations': np.nan,
                         'failures': int(count)})
        if count > SIM_FAILURE_WARNING * iterations:
            logger.warning(f"{time_model} at n={n}: {count} of {iterations} iterations failed")
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def run_experiment(config: SimConfig) -> pd.DataFrame:
    """
    Run the Monte Carlo study.

    Args:
        config: Study settings

    Returns:
        DataFrame with one row per (n, time model, t) in METRICS_COLUMNS layout
    """
    truth = {t: true_effect(t, n_draws=config.truth_draws) for t in config.target_times}
    logger.info(f"True risk differences: {truth}")
    jobs = mp.cpu_count() if config.jobs == -1 else config.jobs

    frames = []
    for n in config.sample_sizes:
        records = _run_iterations(_Iteration(config, n), config.iterations, jobs)
        frame = pd.DataFrame.from_records(records, columns=_RECORD_COLUMNS)
        metrics = summarize(frame, truth, config.iterations)
        logger.info(f"Finished {config.iterations} iterations at n={n}")
        frames.append(metrics)
    return pd.concat(frames, ignore_index=True)
