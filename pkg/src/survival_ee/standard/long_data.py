"""
Person-Period Data and IRLS Logistic Regression

The standard implementation of pooled logistic regression: expand every
unit into one row per interval under observation, then fit an ordinary
logistic model by iteratively reweighted least squares.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import expit

from survival_ee.core.indicators import indicator_matrices
from survival_ee.core.time_design import build_design
from survival_ee.models.dataset import SurvivalDataset, TimeGrid
from survival_ee.models.design import TimeDesignMatrix, TimeDesignSpec
from survival_ee.utils.constants import DEFAULT_TOLERANCE
from survival_ee.utils.exceptions import LongFitError

logger = logging.getLogger(__name__)

#coefficients beyond this during IRLS signal separation
_DIVERGENCE_BOUND = 1e3
_MAX_HALVINGS = 30


@dataclass(eq=False)
class LongTable:
    """
    One row per (unit, interval) under observation.

    frame columns: unit_id, interval, y, weight, then covariate_columns and
    time_columns (the rows of S for that interval).
    """
    frame: pd.DataFrame
    covariate_columns: List[str]
    time_columns: List[str]
    n_units: int

    @property
    def design_columns(self) -> List[str]:
        return self.covariate_columns + self.time_columns

    def design_matrix(self) -> np.ndarray:
        return self.frame[self.design_columns].to_numpy(dtype=float)

    @property
    def response(self) -> np.ndarray:
        return self.frame['y'].to_numpy(dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return self.frame['weight'].to_numpy(dtype=float)

    def __len__(self) -> int:
        return len(self.frame)

    def __str__(self) -> str:
        return f"LongTable({len(self)} rows, {self.n_units} units, {len(self.design_columns)} columns)"


@dataclass(eq=False)
class LongFitResult:
    """MLE of the row-level logistic model"""
    beta: np.ndarray
    names: List[str]
    iterations: int
    score_norm: float


def expand_long(dataset: SurvivalDataset, grid: Optional[TimeGrid] = None,
                time_spec: Optional[TimeDesignSpec] = None, design: Optional[TimeDesignMatrix] = None,
                restrict_to_event_times: bool = True) -> LongTable:
    """
    Expand units into person-period rows with Y_{i,k} = I(T*_i = k) Delta_i.

    Args:
        dataset: Observed data (its covariates become row covariates)
        grid: Grid (defaults to the dataset's)
        time_spec: Functional form for time, realized here when design is None
        design: Pre-built time design; rows outside design.row_times are dropped
        restrict_to_event_times: For the disjoint form keep only rows at the
            unique event times; otherwise every interval gets an indicator

    Returns:
        LongTable with sum_i T*_i rows (fewer when restricted)
    """
    grid = grid or dataset.grid
    if design is None:
        time_spec = time_spec or TimeDesignSpec('linear')
        if time_spec.is_disjoint and not restrict_to_event_times:
            design = build_design(time_spec, grid.times, grid=grid)
        else:
            design = build_design(time_spec, dataset.unique_event_times, grid=grid)
    indicators = indicator_matrices(dataset, grid, design.row_times)

    # nonzero on the transpose orders rows by unit, then interval
    unit, row = np.nonzero(indicators.risk_set.T)
    weights = dataset.weight_matrix(design.row_times)
    frame = pd.DataFrame({
        'unit_id': dataset.unit_id[unit],
        'interval': design.row_times[row],
        'y': indicators.events.T[unit, row].astype(float),
        'weight': np.ones(unit.size) if weights is None else weights.T[unit, row],
    })
    covariates = pd.DataFrame(dataset.covariates[unit], columns=list(dataset.covariate_names))
    time_columns = [f"S:{c}" for c in design.column_names]
    times = pd.DataFrame(design.matrix[row], columns=time_columns)
    frame = pd.concat([frame, covariates, times], axis=1)
    return LongTable(frame, list(dataset.covariate_names), time_columns, dataset.n)


def long_score(long: LongTable, beta: np.ndarray) -> np.ndarray:
    """Logistic score X^T w (y - p) summed over all long rows"""
    X = long.design_matrix()
    residual = long.weights * (long.response - expit(X @ np.asarray(beta, dtype=float)))
    return X.T @ residual


def fit_long_logistic(long: LongTable, tolerance: float = DEFAULT_TOLERANCE, max_iterations: int = 100) -> LongFitResult:
    """
    Maximum likelihood for the row-level logistic model by IRLS.

    Convergence is declared when the max-norm of the score divided by the
    number of units drops below tolerance (the same scale as the mean
    estimating function).

    Raises:
        LongFitError: For no events, aliased columns or divergence (separation)
    """
    X = long.design_matrix()
    y, w = long.response, long.weights
    names = long.design_columns
    if not np.any(y * w > 0):
        raise LongFitError("no events observed")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        _, _, vt = linalg.svd(X, full_matrices=False)
        aliased = [names[j] for j in np.flatnonzero(np.abs(vt[-1]) > 1e-8)]
        raise LongFitError(f"design is rank deficient ({rank} < {X.shape[1]}); aliased columns: {aliased}")

    def loglik(beta: np.ndarray) -> float:
        eta = X @ beta
        return float(np.sum(w * (y * eta - np.logaddexp(0.0, eta))))

    beta = np.zeros(X.shape[1])
    current = loglik(beta)
    for iteration in range(1, max_iterations + 1):
        p = expit(X @ beta)
        score = X.T @ (w * (y - p))
        norm = float(np.max(np.abs(score))) / long.n_units
        if norm <= tolerance:
            logger.debug(f"IRLS converged in {iteration - 1} iterations")
            return LongFitResult(beta, names, iteration - 1, norm)
        information = (X * (w * p * (1.0 - p))[:, None]).T @ X
        try:
            step = linalg.solve(information, score, assume_a='pos')
        except linalg.LinAlgError:
            raise LongFitError("information matrix is singular (separation?)")
        # halve the step until the log-likelihood does not decrease
        for _ in range(_MAX_HALVINGS):
            candidate = beta + step
            value = loglik(candidate)
            if value >= current - 1e-12 * abs(current):
                break
            step = step / 2.0
        beta, current = candidate, value
        if np.max(np.abs(beta)) > _DIVERGENCE_BOUND:
            raise LongFitError(f"IRLS diverged after {iteration} iterations (separation detected)")
    raise LongFitError(f"IRLS did not converge in {max_iterations} iterations")
