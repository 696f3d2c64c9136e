"""
Time and Covariate Design Construction

Builds the time design matrix S for every supported functional form and
the covariate matrix X (linear terms, restricted splines, treatment terms)
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from survival_ee.models.dataset import SurvivalDataset, TimeGrid
from survival_ee.models.design import CovariateDesign, TimeDesignMatrix, TimeDesignSpec
from survival_ee.utils.constants import MIN_SPLINE_KNOTS
from survival_ee.utils.exceptions import DesignError

logger = logging.getLogger(__name__)


def truncated_power_terms(values: Union[float, Sequence[float]], knots: Sequence[float],
                          power: int = 2, restricted: bool = True) -> np.ndarray:
    """
    Truncated power spline terms (x - k_j)_+^power.

    With restricted=True the last-knot term is subtracted from every other
    term, leaving m - 1 columns.

    Args:
        values: Points to evaluate
        knots: Ascending knots k_1 < ... < k_m
        power: 2 (quadratic) or 3 (cubic)
        restricted: Subtract the last-knot term

    Returns:
        Array of shape (len(values), m - 1) or (len(values), m)
    """
    x = np.atleast_1d(np.asarray(values, dtype=float))
    knots = np.asarray(knots, dtype=float)
    terms = np.clip(x[:, None] - knots[None, :], 0.0, None) ** power
    if restricted:
        terms = terms[:, :-1] - terms[:, -1:]
    return terms


def restricted_quadratic_spline(t: Union[float, Sequence[float]], knots: Sequence[float]) -> np.ndarray:
    """
    term_j(t) = (t - k_j)_+^2 - (t - k_m)_+^2 for j = 1..m-1.

    Returns a vector for scalar t and a (len(t), m-1) matrix otherwise.
    """
    if len(knots) < MIN_SPLINE_KNOTS:
        raise DesignError(f"restricted spline needs at least {MIN_SPLINE_KNOTS} knots, got {len(knots)}")
    terms = truncated_power_terms(t, knots, power=2, restricted=True)
    return terms[0] if np.ndim(t) == 0 else terms


def build_design(spec: TimeDesignSpec, unique_event_times: Optional[Sequence[int]] = None,
                 grid: Optional[TimeGrid] = None) -> TimeDesignMatrix:
    """
    Realize the time design matrix S.

    Args:
        spec: Functional form for time
        unique_event_times: Rows for the disjoint form (ascending grid times)
        grid: Grid to use when `spec` does not carry one

    Returns:
        TimeDesignMatrix with an all-ones first column

    Raises:
        DesignError: For missing grids, empty event times or knots off the grid
    """
    grid = spec.grid or grid
    if grid is None:
        raise DesignError("time design needs a grid")
    k = grid.times.astype(float)
    ones = np.ones((grid.K, 1))

    if spec.form == 'intercept_only':
        return TimeDesignMatrix(ones, ('intercept',), grid.times, spec.form)
    if spec.form == 'linear':
        return TimeDesignMatrix(np.column_stack([ones, k]), ('intercept', 't'), grid.times, spec.form)
    if spec.form == 'log_linear':
        return TimeDesignMatrix(np.column_stack([ones, np.log(k)]), ('intercept', 'log_t'), grid.times, spec.form)
    if spec.form == 'spline':
        knots = np.asarray(spec.knots)
        if knots[0] <= 0 or knots[-1] >= grid.K:
            raise DesignError(f"spline knots {spec.knots} must lie inside (0, {grid.K})")
        terms = restricted_quadratic_spline(k, knots)
        names = ('intercept', 't') + tuple(f"t_rqs{j + 1}" for j in range(terms.shape[1]))
        return TimeDesignMatrix(np.column_stack([ones, k, terms]), names, grid.times, spec.form)

    # disjoint: intercept + indicators for the non-reference unique event times
    if unique_event_times is None or len(unique_event_times) == 0:
        raise DesignError("disjoint time needs at least one unique event time")
    rows = np.asarray(unique_event_times, dtype=np.int64)
    if np.any(np.diff(rows) <= 0) or rows[0] < 1 or rows[-1] > grid.K:
        raise DesignError("unique event times must be ascending grid times")
    matrix = np.identity(rows.size)
    matrix[:, 0] = 1.0
    names = ('intercept',) + tuple(f"t{t}" for t in rows[1:])
    return TimeDesignMatrix(matrix, names, rows, spec.form, rows_are_unique_event_times=True)


def build_covariate_matrix(dataset: SurvivalDataset, design: CovariateDesign,
                           treatment_value: Optional[int] = None) -> Tuple[np.ndarray, List[str]]:
    """
    Build the covariate matrix X for g(A, W).

    Args:
        dataset: Dataset whose covariates are the raw W columns
        design: Covariate design
        treatment_value: Force A to this value (None keeps A as observed)

    Returns:
        Tuple of (n x p matrix, column names)
    """
    names = list(dataset.covariate_names)
    terms = list(design.terms) if design.terms is not None else names
    unknown = [t for t in list(terms) + list(design.splines) if t not in names]
    if unknown:
        raise DesignError(f"Unknown covariates in design: {unknown}")

    columns, labels = [], []
    if design.intercept:
        columns.append(np.ones(dataset.n))
        labels.append('intercept')
    if design.treatment_term:
        if dataset.treatment is None:
            raise DesignError("treatment term requested but dataset has no treatment")
        a = dataset.treatment if treatment_value is None else np.full(dataset.n, float(treatment_value))
        columns.append(np.asarray(a, dtype=float))
        labels.append('A')

    covariate_columns, covariate_labels = [], []
    for term in terms:
        covariate_columns.append(dataset.covariates[:, names.index(term)])
        covariate_labels.append(term)
    for term, knots in design.splines.items():
        spline = truncated_power_terms(dataset.covariates[:, names.index(term)], knots,
                                       power=design.spline_power, restricted=True)
        covariate_columns.extend(spline.T)
        covariate_labels.extend(f"{term}_sp{j + 1}" for j in range(spline.shape[1]))
    columns.extend(covariate_columns)
    labels.extend(covariate_labels)

    if design.treatment_interactions:
        a = columns[labels.index('A')]
        columns.extend(a * c for c in covariate_columns)
        labels.extend(f"A:{c}" for c in covariate_labels)

    matrix = np.column_stack(columns) if columns else np.empty((dataset.n, 0))
    return matrix, labels
