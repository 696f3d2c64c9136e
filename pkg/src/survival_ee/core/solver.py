"""
Root-Finding for Stacked Estimating Equations

Newton iteration on the mean estimating function with a Levenberg-Marquardt
fallback whenever the Newton step fails to reduce the max-norm, and central
difference Jacobians for both the solver and the sandwich bread.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from survival_ee.models.results import SolveDiagnostics
from survival_ee.utils.constants import (
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_STEP_DAMPING,
    DEFAULT_TOLERANCE,
    JACOBIAN_STEP_SCALE,
    MAX_DAMPING,
)
from survival_ee.utils.exceptions import NumericalDerivativeError, SolverError

logger = logging.getLogger(__name__)

EstimatingFunction = Callable[[np.ndarray], np.ndarray]

#reciprocal condition below this is treated as singular
_SINGULAR_RCOND = 1e-14


@dataclass(frozen=True)
class SolverOptions:
    """
    Root-finding controls.

    Args:
        max_iterations: Newton/LM steps before giving up
        tolerance: Max-norm of the mean estimating function at a root
        step_damping: Initial Levenberg-Marquardt damping factor
        jacobian_step: Central-difference base step (scaled by max(1, |theta|));
            None uses the cube root of machine epsilon
    """
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    tolerance: float = DEFAULT_TOLERANCE
    step_damping: float = DEFAULT_STEP_DAMPING
    jacobian_step: Optional[float] = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if int(self.max_iterations) < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.step_damping > 0:
            raise ValueError(f"step_damping must be > 0, got {self.step_damping}")
        if self.jacobian_step is not None and not self.jacobian_step > 0:
            raise ValueError(f"jacobian_step must be > 0, got {self.jacobian_step}")


def jacobian_steps(theta: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """Per-coordinate steps h * max(1, |theta_c|)"""
    base = JACOBIAN_STEP_SCALE if h is None else float(h)
    steps = base * np.maximum(1.0, np.abs(theta))
    # use exactly representable steps
    return (theta + steps) - theta


def numerical_jacobian(f: EstimatingFunction, theta: Sequence[float], h: Optional[float] = None) -> np.ndarray:
    """
    Central-difference Jacobian J[r, c] = (f_r(theta + h_c e_c) - f_r(theta - h_c e_c)) / (2 h_c).

    Args:
        f: Vector-valued function of theta
        theta: Evaluation point
        h: Base step (see jacobian_steps)

    Returns:
        Matrix of shape (len(f(theta)), len(theta))

    Raises:
        NumericalDerivativeError: If f is not finite at a perturbed point
    """
    theta = np.asarray(theta, dtype=float)
    steps = jacobian_steps(theta, h)
    columns = []
    for c in range(theta.size):
        shift = np.zeros_like(theta)
        shift[c] = steps[c]
        upper = np.asarray(f(theta + shift), dtype=float)
        lower = np.asarray(f(theta - shift), dtype=float)
        if not (np.all(np.isfinite(upper)) and np.all(np.isfinite(lower))):
            raise NumericalDerivativeError(
                f"estimating function is not finite when perturbing coordinate {c}", coordinate=c)
        columns.append((upper - lower) / (2.0 * steps[c]))
    return np.column_stack(columns)


def null_directions(matrix: np.ndarray, names: Optional[Sequence[str]] = None,
                    rcond: float = _SINGULAR_RCOND) -> List[str]:
    """Parameters loading on the (near) null space of a square matrix"""
    _, singular, vt = linalg.svd(matrix)
    if singular.size == 0 or singular[0] == 0:
        flagged = range(matrix.shape[1])
    else:
        weak = singular <= rcond * singular[0]
        if not weak.any():
            weak[-1] = True
        loadings = np.abs(vt[weak]).max(axis=0)
        flagged = np.flatnonzero(loadings > 0.1 * loadings.max())
    names = list(names) if names is not None else [f"theta[{i}]" for i in range(matrix.shape[1])]
    return [names[i] for i in flagged]


def _is_singular(jacobian: np.ndarray) -> bool:
    singular = linalg.svd(jacobian, compute_uv=False)
    return singular.size == 0 or singular[-1] <= _SINGULAR_RCOND * max(singular[0], np.finfo(float).tiny)


def solve_roots(ef: EstimatingFunction, theta0: Sequence[float], opts: Optional[SolverOptions] = None,
                parameter_names: Optional[Sequence[str]] = None) -> Tuple[np.ndarray, SolveDiagnostics]:
    """
    Find theta with ||mean EF(theta)||_inf <= tolerance.

    Args:
        ef: Function theta -> mean estimating function vector
        theta0: Starting point
        opts: Solver options
        parameter_names: Labels used in failure messages

    Returns:
        Tuple of (theta_hat, SolveDiagnostics)

    Raises:
        SolverError: On non-convergence, stalls or a singular Jacobian
    """
    opts = opts or SolverOptions()
    theta = np.asarray(theta0, dtype=float).copy()
    values = np.asarray(ef(theta), dtype=float)
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(theta)):
        raise SolverError("estimating function is not finite at the starting point")
    norm = float(np.max(np.abs(values))) if values.size else 0.0
    damping = opts.step_damping
    jacobian = None

    iteration = 0
    while norm > opts.tolerance:
        if iteration >= opts.max_iterations:
            diagnostics = SolveDiagnostics(iteration, norm, False, _condition(jacobian), damping)
            raise SolverError(f"no convergence after {iteration} iterations (|mean EF|_inf={norm:.3e})",
                              diagnostics)
        iteration += 1
        jacobian = numerical_jacobian(ef, theta, opts.jacobian_step)
        if _is_singular(jacobian):
            diagnostics = SolveDiagnostics(iteration, norm, False, np.inf, damping)
            raise SolverError("singular Jacobian (separation or an interval without events?)",
                              diagnostics, null_directions(jacobian, parameter_names))

        step = linalg.solve(jacobian, -values)
        trial, trial_values, trial_norm = _evaluate(ef, theta + step)
        if trial_norm < norm:
            damping = max(damping / 10.0, opts.step_damping)
        else:
            # Levenberg-Marquardt: shrink toward gradient descent until the norm drops
            gram = jacobian.T @ jacobian
            gradient = jacobian.T @ values
            scale = np.diag(np.diag(gram)) + np.eye(gram.shape[0]) * np.finfo(float).eps
            while damping <= MAX_DAMPING:
                step = linalg.solve(gram + damping * scale, -gradient, assume_a='pos')
                trial, trial_values, trial_norm = _evaluate(ef, theta + step)
                if trial_norm < norm:
                    break
                damping *= 10.0
            else:
                diagnostics = SolveDiagnostics(iteration, norm, False, _condition(jacobian), damping)
                raise SolverError(f"damped step cannot reduce |mean EF|_inf={norm:.3e}", diagnostics)

        theta, values, norm = trial, trial_values, trial_norm
        logger.debug(f"iteration {iteration}: |mean EF|_inf={norm:.3e}, damping={damping:.1e}")

    if jacobian is None:
        jacobian = numerical_jacobian(ef, theta, opts.jacobian_step)
    diagnostics = SolveDiagnostics(iteration, norm, True, _condition(jacobian), damping)
    return theta, diagnostics


def _evaluate(ef: EstimatingFunction, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    if not np.all(np.isfinite(theta)):
        return theta, theta, np.inf
    values = np.asarray(ef(theta), dtype=float)
    if not np.all(np.isfinite(values)):
        return theta, values, np.inf
    return theta, values, float(np.max(np.abs(values)))


def _condition(jacobian: Optional[np.ndarray]) -> float:
    if jacobian is None or jacobian.size == 0:
        return float('nan')
    return float(np.linalg.cond(jacobian))
