"""
Record validators shared by the CSV loader and the dataset constructor
"""

import numpy as np

from survival_ee.utils.exceptions import DataValidationError


def _first_bad(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def validate_observed_times(times: np.ndarray, K: int) -> np.ndarray:
    """
    Check grid times are integers in 1..K.

    Args:
        times: Observed times on the grid
        K: Number of grid intervals

    Returns:
        Times as an int64 array

    Raises:
        DataValidationError: naming the first offending row
    """
    times = np.asarray(times, dtype=float)
    if not np.all(np.isfinite(times)):
        raise DataValidationError("observed time is not finite", row=_first_bad(~np.isfinite(times)))
    if np.any(times != np.round(times)):
        raise DataValidationError("observed time is not on the integer grid", row=_first_bad(times != np.round(times)))
    if np.any(times < 1):
        raise DataValidationError(f"observed time must be >= 1, got {times[times < 1][0]}", row=_first_bad(times < 1))
    if np.any(times > K):
        raise DataValidationError(f"observed time exceeds K={K}", row=_first_bad(times > K))
    return times.astype(np.int64)


def validate_binary(values: np.ndarray, label: str) -> np.ndarray:
    """Check a column only holds 0/1 and return it as int64"""
    values = np.asarray(values, dtype=float)
    bad = ~np.isin(values, (0.0, 1.0))
    if np.any(bad):
        row = _first_bad(bad)
        raise DataValidationError(f"{label} must be 0 or 1, got {values[row]:g}", row=row)
    return values.astype(np.int64)


def validate_covariates(covariates: np.ndarray) -> np.ndarray:
    """Check the covariate matrix is finite and 2-d"""
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    if covariates.ndim != 2:
        raise DataValidationError(f"covariates must be an n x p matrix, got shape {covariates.shape}")
    finite = np.all(np.isfinite(covariates), axis=1)
    if not np.all(finite):
        raise DataValidationError("covariate row has non-finite entries", row=_first_bad(~finite))
    return covariates


def validate_weights(weights: np.ndarray, n: int, K: int) -> np.ndarray:
    """Check weights are non-negative, finite and shaped (n,) or (n, K)"""
    weights = np.asarray(weights, dtype=float)
    if weights.shape not in ((n,), (n, K)):
        raise DataValidationError(f"weights must have shape ({n},) or ({n}, {K}), got {weights.shape}")
    bad = ~np.isfinite(weights) | (weights < 0)
    if weights.ndim == 2:
        bad = bad.any(axis=1)
    if np.any(bad):
        raise DataValidationError("weights must be finite and non-negative", row=_first_bad(bad))
    return weights
