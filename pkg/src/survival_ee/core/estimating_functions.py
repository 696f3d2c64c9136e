"""
Pooled Logistic Estimating Functions

Evaluates the stacked pooled-logistic score without building the
person-period data, plus the g-computation risk functions. The score is
available in a vectorized form (K x n matrices) and a low-memory loop
over intervals that only ever keeps O(n(p + q + 3)) live values.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from survival_ee.core.indicators import indicator_matrices
from survival_ee.models.dataset import SurvivalDataset
from survival_ee.models.design import TimeDesignMatrix
from survival_ee.models.results import EFStack, HazardMatrix
from survival_ee.utils.constants import (
    BYTES_PER_ELEMENT,
    DEFAULT_MEMORY_BUDGET,
    ELEMENT_MODES,
    HAZARD_CLAMP,
    KERNEL_MODES,
    LOGIT_BOUND,
)
from survival_ee.utils.exceptions import DesignError, SurvivalEEError

logger = logging.getLogger(__name__)


def bounded_expit(logits: np.ndarray) -> np.ndarray:
    """expit of logits clipped to +/- LOGIT_BOUND, so hazards are never exactly 0 or 1"""
    return expit(np.clip(logits, -LOGIT_BOUND, LOGIT_BOUND))


def modified_columns(design: TimeDesignMatrix) -> np.ndarray:
    """
    Time columns of the treatment-modified block.

    The intercept column is left out: the treatment main effect already
    shifts the baseline hazard of the modified units.
    """
    return design.matrix[:, 1:]


def hazard_matrix(x_linpred: np.ndarray, design: TimeDesignMatrix, beta_s: np.ndarray,
                  modifier: Optional[np.ndarray] = None,
                  beta_sa: Optional[np.ndarray] = None) -> HazardMatrix:
    """
    Y_hat = expit(X_lin (+) S . beta_S), optionally plus (S' . beta_SA) scaled by a per-unit modifier,
    where S' is S without its intercept column.

    Args:
        x_linpred: n-vector X . beta_X
        design: Time design S (rows x q)
        beta_s: q-vector of time coefficients
        modifier: Optional n-vector (treatment) multiplying a second time block
        beta_sa: (q - 1)-vector for the modified block

    Returns:
        HazardMatrix of shape (rows, n)
    """
    x_linpred = np.asarray(x_linpred, dtype=float)
    beta_s = np.asarray(beta_s, dtype=float)
    if beta_s.shape != (design.q,):
        raise DesignError(f"beta_S has length {beta_s.size}, time design has {design.q} columns")
    logits = x_linpred[None, :] + (design.matrix @ beta_s)[:, None]
    if modifier is not None:
        beta_sa = np.asarray(beta_sa, dtype=float)
        if beta_sa.shape != (design.q - 1,):
            raise DesignError(f"beta_SA has length {beta_sa.size}, modified block has {design.q - 1} columns")
        modifier = np.asarray(modifier, dtype=float)
        logits = logits + (modified_columns(design) @ beta_sa)[:, None] * modifier[None, :]
    return HazardMatrix(bounded_expit(logits), design.row_times)


def residual_matrix(events: np.ndarray, hazards: HazardMatrix, risk_set: np.ndarray,
                    weights: Optional[np.ndarray] = None) -> np.ndarray:
    """
    P = (Y - Y_hat) (.) R, times omega when weighted. Zero outside the risk set.
    """
    values = hazards.values if isinstance(hazards, HazardMatrix) else np.asarray(hazards)
    residuals = (events - values) * risk_set
    if weights is not None:
        residuals = residuals * weights
    return residuals


def survival_from_hazards(hazards) -> np.ndarray:
    """Column-wise cumulative product of 1 - hazard"""
    values = hazards.values if isinstance(hazards, HazardMatrix) else np.asarray(hazards)
    return np.cumprod(1.0 - np.clip(values, HAZARD_CLAMP, 1.0 - HAZARD_CLAMP), axis=0)


def risks_at_times(hazards: HazardMatrix, target_times: Sequence[int]) -> np.ndarray:
    """
    Per-unit risk 1 - S(t) at each target time.

    Between row times the last computed survival carries forward (step
    function), and times before the first row have risk 0.

    Returns:
        Matrix of shape (len(target_times), n)
    """
    survival = survival_from_hazards(hazards)
    positions = np.searchsorted(hazards.row_times, np.asarray(target_times), side='right') - 1
    risks = np.zeros((positions.size, survival.shape[1]))
    observed = positions >= 0
    risks[observed] = 1.0 - survival[positions[observed]]
    return risks


def risk_ef(hazards_a: HazardMatrix, target_times: Sequence[int], gamma: Sequence[float]) -> np.ndarray:
    """
    Risk estimating functions {1 - prod_{j<=k}(1 - Y_hat^a[j, i])} - gamma_k.

    Args:
        hazards_a: Hazards predicted with A set to a
        target_times: Grid times of interest
        gamma: One risk parameter per target time

    Returns:
        Matrix of shape (len(target_times), n)
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (len(target_times),):
        raise DesignError(f"gamma has length {gamma.size} for {len(target_times)} target times")
    return risks_at_times(hazards_a, target_times) - gamma[:, None]


def estimate_elements(n: int, K: int, K_star: int, p: int, q: int, mode: str) -> int:
    """
    Number of stored elements for each implementation.

    standard: (p + q + 1) K n, vectorized: n + 5Kn + Kq,
    vectorized_disjoint: n + 5K*n + K*q, loop: n(p + q + 3)
    """
    if min(n, K, K_star, p, q) < 1:
        raise ValueError("all dimensions must be positive")
    if mode == 'standard':
        return (p + q + 1) * K * n
    if mode == 'vectorized':
        return n + 5 * K * n + K * q
    if mode == 'vectorized_disjoint':
        return n + 5 * K_star * n + K_star * q
    if mode == 'loop':
        return n * (p + q + 3)
    raise ValueError(f"Unknown mode: {mode} (expected one of {ELEMENT_MODES})")


def resolve_mode(mode: str, n: int, design: TimeDesignMatrix, p: int,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET) -> str:
    """Pick vectorized or loop; 'auto' goes vectorized when it fits the memory budget"""
    if mode not in KERNEL_MODES:
        raise ValueError(f"Unknown kernel mode: {mode}")
    if mode != 'auto':
        return mode
    rows = design.n_rows
    kind = 'vectorized_disjoint' if design.rows_are_unique_event_times else 'vectorized'
    needed = estimate_elements(n, rows, rows, max(p, 1), design.q, kind) * BYTES_PER_ELEMENT
    if needed <= memory_budget:
        return 'vectorized'
    logger.info(f"Vectorized score needs ~{needed / 1024 ** 2:.0f} MiB > budget; using loop mode")
    return 'loop'


class PooledLogisticEE:
    """
    Stacked pooled-logistic score for one dataset and time design.

    Vectorized mode builds the indicator matrices once; loop mode rebuilds
    one row of R and Y per interval so nothing of size rows x n is kept.
    Every call evaluates the score at a new beta = (beta_X, beta_S[, beta_SA]).
    """

    def __init__(self, dataset: SurvivalDataset, design: TimeDesignMatrix,
                 weights: Optional[np.ndarray] = None, time_modifier: Optional[np.ndarray] = None,
                 mode: str = 'auto', memory_budget: int = DEFAULT_MEMORY_BUDGET):
        """
        Args:
            dataset: Data; its covariates are used as X
            design: Time design S (rows define the grid of the score)
            weights: Optional (rows x n) weights overriding the dataset's
            time_modifier: Optional n-vector; adds a time block scaled by it
            mode: vectorized, loop or auto
            memory_budget: Bytes available to the vectorized kernel in auto mode
        """
        self.logger = logging.getLogger(__name__)
        self.dataset = dataset
        self.design = design
        self.X = dataset.covariates
        self.S = design.matrix
        if weights is not None and np.shape(weights) != (design.n_rows, dataset.n):
            raise DesignError(f"weights must have shape {(design.n_rows, dataset.n)}, got {np.shape(weights)}")
        self.modifier = None if time_modifier is None else np.asarray(time_modifier, dtype=float)
        self.mode = resolve_mode(mode, dataset.n, design, dataset.p, memory_budget)
        self.disjoint = design.rows_are_unique_event_times

        self.indicators = None
        if self.mode == 'vectorized':
            self.indicators = indicator_matrices(dataset, row_times=design.row_times)
            if weights is None:
                weights = dataset.weight_matrix(design.row_times)
        self.weights = weights

        p, q = dataset.p, design.q
        self.parameter_layout: Dict[str, slice] = {'beta_x': slice(0, p), 'beta_s': slice(p, p + q)}
        self.parameter_names = list(dataset.covariate_names) + [f"S:{c}" for c in design.column_names]
        if self.modifier is not None:
            self.parameter_layout['beta_sa'] = slice(p + q, p + 2 * q - 1)
            self.parameter_names += [f"A:S:{c}" for c in design.column_names[1:]]

    @property
    def n_params(self) -> int:
        return max(s.stop for s in self.parameter_layout.values())

    def split(self, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_params,):
            raise DesignError(f"beta has length {beta.size}, model has {self.n_params} parameters")
        if not np.all(np.isfinite(beta)):
            raise SurvivalEEError(f"beta must be finite, got {beta}")
        beta_sa = beta[self.parameter_layout['beta_sa']] if self.modifier is not None else None
        return beta[self.parameter_layout['beta_x']], beta[self.parameter_layout['beta_s']], beta_sa

    def hazards(self, beta: np.ndarray, X: Optional[np.ndarray] = None,
                modifier: Optional[np.ndarray] = None) -> HazardMatrix:
        """Hazards at beta for the fitted units, or for a prediction matrix X"""
        beta_x, beta_s, beta_sa = self.split(beta)
        if self.modifier is not None and modifier is None:
            if X is not None:
                raise DesignError("predicting with a time x treatment block needs the modifier vector")
            modifier = self.modifier
        X = self.X if X is None else X
        return hazard_matrix(X @ beta_x, self.design, beta_s,
                             modifier if self.modifier is not None else None, beta_sa)

    def row_indicators(self, k: int) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        """Risk set, events and weights of row k as n-vectors"""
        if self.indicators is not None:
            weights = None if self.weights is None else self.weights[k]
            return self.indicators.risk_set[k], self.indicators.events[k], weights
        t = self.design.row_times[k]
        times = self.dataset.observed_time
        risk = (times >= t).astype(float)
        events = ((times == t) & (self.dataset.event == 1)).astype(float)
        if self.weights is not None:
            return risk, events, self.weights[k]
        unit_weights = self.dataset.weights
        if unit_weights is None:
            return risk, events, None
        return risk, events, unit_weights if unit_weights.ndim == 1 else unit_weights[:, t - 1]

    def row_totals(self) -> Tuple[np.ndarray, np.ndarray]:
        """Weighted event count and weighted number at risk for every row"""
        events = np.zeros(self.design.n_rows)
        at_risk = np.zeros(self.design.n_rows)
        for k in range(self.design.n_rows):
            risk, event, weights = self.row_indicators(k)
            if weights is not None:
                risk, event = risk * weights, event * weights
            events[k], at_risk[k] = event.sum(), risk.sum()
        return events, at_risk

    def __call__(self, beta: np.ndarray) -> np.ndarray:
        """Stacked estimating functions as a (params x n) array"""
        if self.mode == 'loop':
            return self._loop(beta)
        return self._vectorized(beta)

    def stack(self, beta: np.ndarray) -> EFStack:
        return EFStack(self(beta), dict(self.parameter_layout))

    def mean(self, beta: np.ndarray) -> np.ndarray:
        return self(beta).mean(axis=1)

    def _vectorized(self, beta: np.ndarray) -> np.ndarray:
        hazards = self.hazards(beta)
        residuals = residual_matrix(self.indicators.events, hazards, self.indicators.risk_set, self.weights)
        x_score = residuals.sum(axis=0)[None, :] * self.X.T
        blocks = [x_score, residuals if self.disjoint else self.S.T @ residuals]
        if self.modifier is not None:
            modified = residuals * self.modifier[None, :]
            blocks.append(modified[1:] if self.disjoint else modified_columns(self.design).T @ modified)
        return np.vstack(blocks)

    def _loop(self, beta: np.ndarray) -> np.ndarray:
        beta_x, beta_s, beta_sa = self.split(beta)
        n, q = self.dataset.n, self.design.q
        x_linpred = self.X @ beta_x
        time_logit = self.S @ beta_s
        S_mod = modified_columns(self.design)
        time_logit_a = S_mod @ beta_sa if self.modifier is not None else None
        y_resid = np.zeros(n)
        s_score = np.zeros((q, n))
        a_score = np.zeros((q - 1, n)) if self.modifier is not None else None

        for k in range(self.design.n_rows):
            risk, events, weights = self.row_indicators(k)
            logit = x_linpred + time_logit[k]
            if self.modifier is not None:
                logit = logit + time_logit_a[k] * self.modifier
            resid = (events - bounded_expit(logit)) * risk
            if weights is not None:
                resid = resid * weights
            y_resid += resid
            if self.disjoint:
                s_score[k] = resid
                if self.modifier is not None and k > 0:
                    a_score[k - 1] = resid * self.modifier
            else:
                s_score += self.S[k][:, None] * resid[None, :]
                if self.modifier is not None:
                    a_score += S_mod[k][:, None] * (resid * self.modifier)[None, :]

        blocks = [y_resid[None, :] * self.X.T, s_score]
        if a_score is not None:
            blocks.append(a_score)
        return np.vstack(blocks)


def score_stack(dataset: SurvivalDataset, design: TimeDesignMatrix, beta: Sequence[float],
                weights: Optional[np.ndarray] = None, mode: str = 'vectorized',
                time_modifier: Optional[np.ndarray] = None) -> EFStack:
    """
    Evaluate the stacked pooled-logistic score at beta.

    Rows for beta_X are ((1 . P) (.) X)^T; rows for beta_S are S^T . P for
    smooth forms and P itself for the disjoint form. With a time modifier A
    the extra rows are S'^T . (P (.) A), S' being S without its intercept.

    Args:
        dataset: Observed data (covariates used as X)
        design: Time design matrix
        beta: (p + q) coefficients, plus (q - 1) with a time modifier
        weights: Optional (rows x n) weights
        mode: vectorized, loop or auto
        time_modifier: Optional treatment vector for a time x treatment block

    Returns:
        EFStack
    """
    model = PooledLogisticEE(dataset, design, weights=weights, time_modifier=time_modifier, mode=mode)
    return model.stack(np.asarray(beta, dtype=float))
