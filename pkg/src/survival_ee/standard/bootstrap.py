"""
Person-Block Bootstrap

Resamples whole units (every person-period a unit contributes travels
together), re-runs an estimator on each resample and aggregates standard
errors, Wald intervals and percentile intervals. Replicate b always draws
from the stream seeded by (seed, b), so sequential and parallel runs agree.
"""

import logging
import multiprocessing as mp
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from pathos.multiprocessing import ProcessPool as Pool
from scipy.stats import norm

from survival_ee.core.estimating_functions import hazard_matrix, risks_at_times
from survival_ee.core.gcomp import GComputationEstimator, GComputationSpec
from survival_ee.core.time_design import build_covariate_matrix, build_design
from survival_ee.models.dataset import SurvivalDataset
from survival_ee.standard.long_data import expand_long, fit_long_logistic
from survival_ee.utils.constants import DEFAULT_CI_LEVEL, MAX_BOOTSTRAP_FAILURE_RATE, SEPARATE_MODELS
from survival_ee.utils.exceptions import BootstrapError, GComputationError, SurvivalEEError

logger = logging.getLogger(__name__)

Estimator = Callable[[SurvivalDataset], np.ndarray]


def resample_units(dataset: SurvivalDataset, rng: np.random.Generator) -> SurvivalDataset:
    """Draw n units with replacement; repeated units get distinct fresh ids"""
    index = rng.integers(0, dataset.n, size=dataset.n)
    return dataset.subset(index, relabel=True)


class StandardGComputation:
    """
    G-computation through the long data: expand, IRLS per arm, standardize.

    Returns [risk1, risk0, rd] at the target times, the same vector
    GComputationEstimator.point_estimates produces. Interaction blocks
    between treatment and time are not supported here.
    """

    def __init__(self, spec: GComputationSpec):
        if spec.interact_treatment:
            raise GComputationError("the long-data estimator does not support treatment x time blocks")
        self.spec = spec

    def _times(self, dataset: SurvivalDataset) -> np.ndarray:
        times = self.spec.target_times
        return dataset.unique_event_times if times is None else np.asarray(times, dtype=np.int64)

    def _arm_risks(self, fit_data: SurvivalDataset, predict_data: SurvivalDataset, a: int,
                   times: np.ndarray) -> np.ndarray:
        covariate_design = self.spec.model_covariate_design()
        if fit_data.n_events == 0:
            raise GComputationError("no events observed")
        X, names = build_covariate_matrix(fit_data, covariate_design)
        design = build_design(self.spec.time_spec, fit_data.unique_event_times, grid=fit_data.grid)
        long = expand_long(fit_data.with_covariates(X, names), design=design)
        fit = fit_long_logistic(long, self.spec.solver_options.tolerance)

        X_pred, _ = build_covariate_matrix(predict_data, covariate_design, treatment_value=a)
        p = X_pred.shape[1]
        hazards = hazard_matrix(X_pred @ fit.beta[:p], design, fit.beta[p:])
        return risks_at_times(hazards, times).mean(axis=1)

    def __call__(self, dataset: SurvivalDataset) -> np.ndarray:
        if dataset.treatment is None:
            raise GComputationError("dataset has no treatment")
        times = self._times(dataset)
        if self.spec.arm_strategy == SEPARATE_MODELS:
            risk1 = self._arm_risks(dataset.subset(dataset.treatment == 1), dataset, 1, times)
            risk0 = self._arm_risks(dataset.subset(dataset.treatment == 0), dataset, 0, times)
        else:
            risk1 = self._arm_risks(dataset, dataset, 1, times)
            risk0 = self._arm_risks(dataset, dataset, 0, times)
        return np.concatenate([risk1, risk0, risk1 - risk0])


class EEGComputation:
    """
    Estimating-equation point estimates, packaged as a bootstrap estimator.

    Pin the target times first (GComputationSpec.with_target_times);
    otherwise each resample evaluates at its own event times.
    """

    def __init__(self, spec: GComputationSpec):
        self.spec = spec

    def __call__(self, dataset: SurvivalDataset) -> np.ndarray:
        return GComputationEstimator(self.spec).point_estimates(dataset)


@dataclass(eq=False)
class BootstrapResult:
    """Aggregated replicates; estimates holds one row per successful replicate"""
    point: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    wald: np.ndarray
    percentile: np.ndarray
    failures: int
    replicates: int
    ci_level: float

    def __str__(self) -> str:
        return (f"BootstrapResult(B={self.replicates}, failures={self.failures}, "
                f"parameters={self.point.size})")


class _Replicate:
    """One resample-and-estimate step; picklable so worker processes can run it"""

    def __init__(self, dataset: SurvivalDataset, estimator: Estimator, seed: int):
        self.dataset = dataset
        self.estimator = estimator
        self.seed = seed

    def __call__(self, b: int) -> Optional[np.ndarray]:
        rng = np.random.default_rng([self.seed, b])
        try:
            return np.asarray(self.estimator(resample_units(self.dataset, rng)), dtype=float)
        except (SurvivalEEError, np.linalg.LinAlgError) as e:
            logger.debug(f"Bootstrap replicate {b} failed: {e}")
            return None


def bootstrap(dataset: SurvivalDataset, estimator: Estimator, replicates: int, seed: int,
              jobs: int = 1, ci_level: float = DEFAULT_CI_LEVEL) -> BootstrapResult:
    """
    Person-block nonparametric bootstrap.

    Args:
        dataset: Observed data
        estimator: Callable mapping a dataset to a parameter vector
        replicates: Number of resamples B
        seed: Base seed; replicate b uses the stream seeded by (seed, b)
        jobs: Worker processes (-1 for all cores)
        ci_level: Level of the Wald and percentile intervals

    Returns:
        BootstrapResult

    Raises:
        BootstrapError: If B < 1, more than 10% of replicates fail or replicate
            estimates do not line up with the full-sample estimate
    """
    if replicates < 1:
        raise BootstrapError(f"replicates must be >= 1, got {replicates}")
    if not 0 < ci_level < 1:
        raise BootstrapError(f"ci_level must be in (0, 1), got {ci_level}")
    if jobs == -1:
        jobs = mp.cpu_count()

    point = np.asarray(estimator(dataset), dtype=float)
    task = _Replicate(dataset, estimator, seed)
    if jobs <= 1:
        results: List[Optional[np.ndarray]] = [task(b) for b in range(replicates)]
    else:
        pool = Pool(jobs)
        try:
            pool.restart()
        except AssertionError:
            pass
        try:
            results = pool.map(task, range(replicates))
        finally:
            pool.close()
            pool.join()

    estimates = [r for r in results if r is not None]
    failures = replicates - len(estimates)
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * replicates:
        raise BootstrapError(f"{failures} of {replicates} bootstrap replicates failed", failures)
    if failures:
        logger.warning(f"{failures} of {replicates} bootstrap replicates failed and were dropped")

    mismatched = [r.shape for r in estimates if r.shape != point.shape]
    if mismatched:
        raise BootstrapError(f"replicate estimates have shape {mismatched[0]} but the full-sample estimate has "
                             f"{point.shape}; fix the target times before bootstrapping")
    estimates = np.vstack(estimates)
    se = estimates.std(axis=0, ddof=1) if len(estimates) > 1 else np.full(point.size, np.nan)
    z = norm.ppf(0.5 + ci_level / 2.0)
    wald = np.column_stack([point - z * se, point + z * se])
    alpha = (1.0 - ci_level) / 2.0
    percentile = np.percentile(estimates, [100 * alpha, 100 * (1 - alpha)], axis=0).T
    logger.info(f"Bootstrap finished: {len(estimates)} replicates ({failures} failed, {jobs} jobs)")
    return BootstrapResult(point, estimates, se, wald, percentile, failures, replicates, ci_level)
