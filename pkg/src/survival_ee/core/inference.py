"""
Empirical Sandwich Variance

Bread, meat and sandwich for stacked estimating equations, plus Wald-type
confidence intervals. Parameters stacked as functions of other parameters
(risks, risk differences) get their delta-method variance automatically.

The bread uses the negative Jacobian, B = -n^-1 sum grad psi; V sandwiches
B on both sides so the sign cancels, and this keeps B positive definite
for score equations.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import norm

from survival_ee.core.solver import EstimatingFunction, null_directions, numerical_jacobian
from survival_ee.models.results import EFStack, SandwichResult
from survival_ee.utils.constants import CONDITION_WARNING, DEFAULT_CI_LEVEL
from survival_ee.utils.exceptions import InferenceError

logger = logging.getLogger(__name__)


def bread(ef_mean: EstimatingFunction, theta_hat: Sequence[float], h: Optional[float] = None) -> np.ndarray:
    """
    B = n^-1 sum_i -grad psi(O_i; theta_hat), as the negated Jacobian of the mean EF.

    Args:
        ef_mean: Function theta -> mean estimating function
        theta_hat: Root of the estimating equations
        h: Optional central-difference base step
    """
    return -numerical_jacobian(ef_mean, np.asarray(theta_hat, dtype=float), h)


def meat(ef_stack: Union[EFStack, np.ndarray]) -> np.ndarray:
    """F = n^-1 sum_i psi_i psi_i^T"""
    matrix = ef_stack.matrix if isinstance(ef_stack, EFStack) else np.asarray(ef_stack, dtype=float)
    n = matrix.shape[1]
    outer = matrix @ matrix.T / n
    return (outer + outer.T) / 2.0


def sandwich(bread_matrix: np.ndarray, meat_matrix: np.ndarray, n: int,
             parameter_names: Optional[Sequence[str]] = None) -> SandwichResult:
    """
    Covariance B^-1 F B^-T / n of the estimates.

    Args:
        bread_matrix: B(theta_hat)
        meat_matrix: F(theta_hat)
        n: Number of units
        parameter_names: Labels for failure messages

    Returns:
        SandwichResult

    Raises:
        InferenceError: If the bread is numerically singular
    """
    bread_matrix = np.asarray(bread_matrix, dtype=float)
    condition = float(np.linalg.cond(bread_matrix)) if bread_matrix.size else float('nan')
    try:
        lu = linalg.lu_factor(bread_matrix, check_finite=True)
        bread_inv = linalg.lu_solve(lu, np.eye(bread_matrix.shape[0]))
    except (linalg.LinAlgError, ValueError) as e:
        raise InferenceError(f"bread cannot be inverted: {e}",
                             null_directions(np.nan_to_num(bread_matrix), parameter_names))
    if not np.all(np.isfinite(bread_inv)) or not np.isfinite(condition):
        raise InferenceError("bread is numerically singular", null_directions(bread_matrix, parameter_names))
    if condition > CONDITION_WARNING:
        logger.warning(f"bread condition number {condition:.2e} exceeds {CONDITION_WARNING:.0e}")

    covariance = bread_inv @ meat_matrix @ bread_inv.T / n
    covariance = (covariance + covariance.T) / 2.0
    se = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    return SandwichResult(bread_matrix, meat_matrix, covariance, se, condition)


def wald_ci(estimate, se, level: float = DEFAULT_CI_LEVEL) -> Tuple[np.ndarray, np.ndarray]:
    """
    estimate -/+ z_{(1 + level)/2} * se.

    Works elementwise on scalars or arrays; non-finite se propagates.
    """
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = norm.ppf((1.0 + level) / 2.0)
    estimate = np.asarray(estimate, dtype=float)
    se = np.asarray(se, dtype=float)
    lower, upper = estimate - z * se, estimate + z * se
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper
