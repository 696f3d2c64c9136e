"""
G-Computation with Pooled Logistic Regression

Fits pooled logistic models (one per arm, or one with a treatment term),
stacks the risk and risk-difference estimating functions on top of the
score, and reports risk curves with sandwich confidence intervals.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from survival_ee.core.estimating_functions import PooledLogisticEE, hazard_matrix, risks_at_times
from survival_ee.core.inference import bread, meat, sandwich, wald_ci
from survival_ee.core.solver import SolverOptions, solve_roots
from survival_ee.core.time_design import build_covariate_matrix, build_design
from survival_ee.models.dataset import SurvivalDataset
from survival_ee.models.design import CovariateDesign, TimeDesignMatrix, TimeDesignSpec
from survival_ee.models.results import FitResult, HazardMatrix, RiskCurve, RiskEstimate
from survival_ee.utils.constants import (
    ARM_STRATEGIES,
    DEFAULT_CI_LEVEL,
    DEFAULT_MEMORY_BUDGET,
    DISJOINT_FLOOR,
    NATURAL_COURSE,
    SEPARATE_MODELS,
    SINGLE_MODEL,
)
from survival_ee.utils.exceptions import DesignError, GComputationError, SolverError

logger = logging.getLogger(__name__)

TreatmentPlan = Union[int, str]


@dataclass(frozen=True)
class GComputationSpec:
    """
    Everything needed to go from a dataset to a risk curve.

    Args:
        time_spec: Functional form for time
        covariate_design: Form of g(W); the treatment term is added for the single-model strategy
        arm_strategy: separate_models_per_arm or single_model_with_treatment_term
        interact_treatment: Single model only: interact A with every covariate and time term
        target_times: Grid times for the risks (default: all unique event times)
        ci_level: Wald interval level
        treatment_column: Name of the treatment in the source data (reporting only)
        solver_options: Root-finding controls
        mode: Score kernel (vectorized, loop or auto)
        memory_budget: Bytes for the vectorized kernel in auto mode
        disjoint_floor: Value pinned on disjoint coefficients of event-free intervals
            (negated for intervals where every unit at risk fails)
    """
    time_spec: TimeDesignSpec
    covariate_design: CovariateDesign = field(default_factory=CovariateDesign)
    arm_strategy: str = SEPARATE_MODELS
    interact_treatment: bool = False
    target_times: Optional[Tuple[int, ...]] = None
    ci_level: float = DEFAULT_CI_LEVEL
    treatment_column: str = 'A'
    solver_options: SolverOptions = field(default_factory=SolverOptions)
    mode: str = 'auto'
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    disjoint_floor: float = DISJOINT_FLOOR

    def __post_init__(self):
        if self.arm_strategy not in ARM_STRATEGIES:
            raise GComputationError(f"Unknown arm strategy: {self.arm_strategy}")
        if self.interact_treatment and self.arm_strategy != SINGLE_MODEL:
            raise GComputationError("interact_treatment only applies to the single-model strategy")
        if not 0 < self.ci_level < 1:
            raise GComputationError(f"ci_level must be in (0, 1), got {self.ci_level}")
        if self.target_times is not None:
            times = tuple(int(t) for t in self.target_times)
            if any(b <= a for a, b in zip(times, times[1:])):
                raise GComputationError(f"target times must be ascending: {times}")
            object.__setattr__(self, 'target_times', times)

    def with_target_times(self, dataset: SurvivalDataset) -> 'GComputationSpec':
        """Pin unset target times to the unique event times of dataset (the full-sample times)"""
        if self.target_times is not None:
            return self
        return replace(self, target_times=tuple(int(t) for t in dataset.unique_event_times))

    def model_covariate_design(self) -> CovariateDesign:
        if self.arm_strategy == SINGLE_MODEL:
            return replace(self.covariate_design, treatment_term=True,
                           treatment_interactions=self.interact_treatment)
        return replace(self.covariate_design, treatment_term=False, treatment_interactions=False)


@dataclass
class _PreparedModel:
    model: PooledLogisticEE
    design: TimeDesignMatrix
    free: np.ndarray
    beta_fixed: np.ndarray


def _prepare(dataset: SurvivalDataset, covariate_design: CovariateDesign, time_spec: TimeDesignSpec,
             interact_time: bool, event_times: Optional[Sequence[int]], mode: str, memory_budget: int,
             disjoint_floor: float) -> _PreparedModel:
    if dataset.n_events == 0:
        raise GComputationError("no events observed")
    X, names = build_covariate_matrix(dataset, covariate_design)
    rows = dataset.unique_event_times if event_times is None else np.asarray(event_times, dtype=np.int64)
    design = build_design(time_spec, rows, grid=dataset.grid)
    if interact_time and design.rows_are_unique_event_times:
        raise DesignError("treatment x disjoint time is saturated per arm; use separate_models_per_arm")
    if interact_time and dataset.treatment is None:
        raise DesignError("treatment x time block requested but dataset has no treatment")
    modifier = dataset.treatment if interact_time else None
    model = PooledLogisticEE(dataset.with_covariates(X, names), design, time_modifier=modifier,
                             mode=mode, memory_budget=memory_budget)

    free = np.ones(model.n_params, dtype=bool)
    beta_fixed = np.zeros(model.n_params)
    if design.rows_are_unique_event_times:
        events, at_risk = model.row_totals()
        empty = events == 0
        full = np.isclose(events, at_risk, rtol=1e-12, atol=0.0) & ~empty
        if empty[0] or full[0]:
            kind = 'no events' if empty[0] else 'an event for every unit at risk'
            raise DesignError(f"reference interval t={design.row_times[0]} of the disjoint design has {kind}")
        offset = model.parameter_layout['beta_s'].start
        for mask, value, reason in ((empty, disjoint_floor, 'without events'),
                                    (full, -disjoint_floor, 'where every unit at risk fails')):
            if mask.any():
                coordinates = offset + np.flatnonzero(mask)
                free[coordinates] = False
                beta_fixed[coordinates] = value
                logger.warning(f"Fixing {mask.sum()} disjoint coefficients {reason} at {value:g} "
                               f"(times {design.row_times[mask][:10].tolist()})")
    return _PreparedModel(model, design, free, beta_fixed)


def fit_pooled_logistic(dataset: SurvivalDataset, covariate_design: Optional[CovariateDesign] = None,
                        time_spec: Optional[TimeDesignSpec] = None,
                        solver_opts: Optional[SolverOptions] = None, interact_time: bool = False,
                        event_times: Optional[Sequence[int]] = None, mode: str = 'auto',
                        memory_budget: int = DEFAULT_MEMORY_BUDGET, disjoint_floor: float = DISJOINT_FLOOR,
                        label: str = '', compute_covariance: bool = True) -> FitResult:
    """
    Fit a pooled logistic model by solving the stacked score equations.

    Args:
        dataset: Observed data; covariates are the raw W columns
        covariate_design: Form of g(A, W) (default: every covariate linearly)
        time_spec: Functional form for time (default: linear)
        solver_opts: Root-finding controls
        interact_time: Add a treatment x time block (single model, smooth forms)
        event_times: Rows of the disjoint design (default: the unique event times)
        mode: Score kernel
        memory_budget: Bytes for the vectorized kernel in auto mode
        disjoint_floor: Value for disjoint coefficients of intervals without events;
            intervals where every unit at risk fails get its negation
        label: Context for log and error messages (e.g. "arm a=1")
        compute_covariance: Also compute the sandwich covariance of beta

    Returns:
        FitResult

    Raises:
        GComputationError: If no events were observed
        SolverError: With arm/form context when root-finding fails
    """
    covariate_design = covariate_design or CovariateDesign()
    time_spec = time_spec or TimeDesignSpec('linear')
    prepared = _prepare(dataset, covariate_design, time_spec, interact_time, event_times, mode,
                        memory_budget, disjoint_floor)
    return _fit_prepared(prepared, covariate_design, time_spec, solver_opts, interact_time, label,
                         compute_covariance)


def _fit_prepared(prepared: _PreparedModel, covariate_design: CovariateDesign, time_spec: TimeDesignSpec,
                  solver_opts: Optional[SolverOptions], interact_time: bool, label: str,
                  compute_covariance: bool) -> FitResult:
    model, free = prepared.model, prepared.free
    names = model.parameter_names
    free_names = [name for name, keep in zip(names, free) if keep]

    def expand(theta_free: np.ndarray) -> np.ndarray:
        beta = prepared.beta_fixed.copy()
        beta[free] = theta_free
        return beta

    def ef_mean(theta_free: np.ndarray) -> np.ndarray:
        return model.mean(expand(theta_free))[free]

    context = f"{label + ' ' if label else ''}{time_spec} time"
    try:
        theta_hat, diagnostics = solve_roots(ef_mean, np.zeros(free.sum()), solver_opts, free_names)
    except SolverError as e:
        error = SolverError(f"{context}: {e}", e.diagnostics)
        error.parameters = e.parameters
        raise error from e
    beta_hat = expand(theta_hat)
    logger.info(f"Fitted pooled logistic ({context}, {model.mode}): {diagnostics}")

    covariance = None
    if compute_covariance:
        step = (solver_opts or SolverOptions()).jacobian_step
        result = sandwich(bread(ef_mean, theta_hat, step), meat(model(beta_hat)[free]), model.dataset.n, free_names)
        covariance = np.full((beta_hat.size, beta_hat.size), np.nan)
        covariance[np.ix_(free, free)] = result.covariance

    return FitResult(
        beta=beta_hat,
        parameter_names=names,
        time_design=prepared.design,
        covariate_design=covariate_design,
        covariate_names=list(model.dataset.covariate_names),
        diagnostics=diagnostics,
        free=free,
        interact_time=interact_time,
        covariance=covariance,
        label=label,
        n=model.dataset.n,
    )


def predict_hazards(fit: FitResult, dataset: SurvivalDataset, beta: Optional[np.ndarray] = None,
                    a: TreatmentPlan = NATURAL_COURSE) -> HazardMatrix:
    """
    Hazards for every unit of dataset with A set to a (or as observed for 'natural').
    """
    beta = fit.beta if beta is None else beta
    treatment_value = None if a == NATURAL_COURSE else int(a)
    if fit.covariate_design.treatment_term and treatment_value is None and dataset.treatment is None:
        raise GComputationError("natural course needs the observed treatment")
    X, _ = build_covariate_matrix(dataset, fit.covariate_design, treatment_value)
    p, q = X.shape[1], fit.time_design.q
    modifier, beta_sa = None, None
    if fit.interact_time:
        modifier = dataset.treatment.astype(float) if treatment_value is None else np.full(dataset.n, float(a))
        beta_sa = beta[p + q:p + 2 * q - 1]
    return hazard_matrix(X @ beta[:p], fit.time_design, beta[p:p + q], modifier, beta_sa)


def _check_target_times(target_times: Sequence[int], K: int) -> np.ndarray:
    times = np.asarray(target_times, dtype=np.int64)
    if times.size == 0:
        raise GComputationError("no target times")
    outside = times[(times < 1) | (times > K)]
    if outside.size:
        raise GComputationError(f"target times {outside.tolist()} lie outside the grid 1..{K}")
    return times


def estimate_risks(fit: FitResult, dataset: SurvivalDataset, a: TreatmentPlan,
                   target_times: Sequence[int]) -> RiskEstimate:
    """
    Marginal risks gamma_k = n^-1 sum_i mu_a(s_k, W_i; beta_hat) and their EF rows.

    Args:
        fit: Converged pooled logistic fit
        dataset: Units to standardize over
        a: 1, 0, or 'natural' to keep A as observed
        target_times: Grid times of interest

    Returns:
        RiskEstimate with ef_rows evaluated at the estimated risks
    """
    if not fit.diagnostics.converged:
        raise GComputationError("fit has not converged")
    times = _check_target_times(target_times, dataset.K)
    risks = risks_at_times(predict_hazards(fit, dataset, a=a), times)
    gamma = risks.mean(axis=1)
    return RiskEstimate(times, gamma, risks - gamma[:, None], a)


class JointStack:
    """
    Full g-computation stack [scores; risk(a=1); risk(a=0); (gamma1 - gamma0) - delta].

    Called with the free parameters; every row is an n-vector over all units.
    """

    def __init__(self, spec: GComputationSpec, dataset: SurvivalDataset, target_times: np.ndarray):
        self.spec = spec
        self.dataset = dataset
        self.times = target_times
        self.r = target_times.size
        self.fits: Dict[str, FitResult] = {}
        self._blocks: List[Tuple[str, _PreparedModel, np.ndarray]] = []
        self.covariate_design = spec.model_covariate_design()

        if spec.arm_strategy == SEPARATE_MODELS:
            arms = [('a=1', dataset.treatment == 1), ('a=0', dataset.treatment == 0)]
        else:
            arms = [('pooled', np.ones(dataset.n, dtype=bool))]
        for label, mask in arms:
            if not mask.any():
                raise GComputationError(f"no units in {label}")
            subset = dataset.subset(mask)
            prepared = _prepare(subset, self.covariate_design, spec.time_spec, spec.interact_treatment,
                                None, spec.mode, spec.memory_budget, spec.disjoint_floor)
            self.fits[label] = _fit_prepared(
                prepared, self.covariate_design, spec.time_spec, spec.solver_options, spec.interact_treatment,
                label=f"arm {label}" if label != 'pooled' else '', compute_covariance=False)
            self._blocks.append((label, prepared, np.flatnonzero(mask)))

        self.names: List[str] = []
        for label, prepared, _ in self._blocks:
            self.names += [f"{label}:{n}" for n, keep in zip(prepared.model.parameter_names, prepared.free) if keep]
        for prefix in ('risk1', 'risk0', 'rd'):
            self.names += [f"{prefix}@{t}" for t in self.times]

        # predictions are fit-specific: separate arms use the arm's own model
        if spec.arm_strategy == SEPARATE_MODELS:
            self._predict_from = {1: 'a=1', 0: 'a=0'}
        else:
            self._predict_from = {1: 'pooled', 0: 'pooled'}

    @property
    def n_beta(self) -> int:
        return sum(int(prepared.free.sum()) for _, prepared, _ in self._blocks)

    def _betas(self, theta: np.ndarray) -> Dict[str, np.ndarray]:
        betas, offset = {}, 0
        for label, prepared, _ in self._blocks:
            count = int(prepared.free.sum())
            beta = prepared.beta_fixed.copy()
            beta[prepared.free] = theta[offset:offset + count]
            betas[label] = beta
            offset += count
        return betas

    def risks(self, theta: np.ndarray, a: int) -> np.ndarray:
        """Per-unit risks (r x n) under plan a at the betas held in theta"""
        label = self._predict_from[a]
        hazards = predict_hazards(self.fits[label], self.dataset, self._betas(theta)[label], a=a)
        return risks_at_times(hazards, self.times)

    def point_estimate(self) -> np.ndarray:
        """theta_hat assembled from the fitted betas and closed-form risks"""
        theta = np.concatenate([self.fits[label].beta[prepared.free] for label, prepared, _ in self._blocks])
        gamma1 = self.risks(theta, 1).mean(axis=1)
        gamma0 = self.risks(theta, 0).mean(axis=1)
        return np.concatenate([theta, gamma1, gamma0, gamma1 - gamma0])

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        n, r, nb = self.dataset.n, self.r, self.n_beta
        betas = self._betas(theta)
        rows = []
        for label, prepared, index in self._blocks:
            block = np.zeros((int(prepared.free.sum()), n))
            block[:, index] = prepared.model(betas[label])[prepared.free]
            rows.append(block)
        gamma1, gamma0, delta = theta[nb:nb + r], theta[nb + r:nb + 2 * r], theta[nb + 2 * r:nb + 3 * r]
        rows.append(self.risks(theta, 1) - gamma1[:, None])
        rows.append(self.risks(theta, 0) - gamma0[:, None])
        rows.append(np.broadcast_to(((gamma1 - gamma0) - delta)[:, None], (r, n)))
        return np.vstack(rows)

    def mean(self, theta: np.ndarray) -> np.ndarray:
        return self(theta).mean(axis=1)


class GComputationEstimator:
    """Runs the full g-computation pipeline for one specification"""

    def __init__(self, spec: GComputationSpec):
        self.spec = spec
        self.logger = logging.getLogger(__name__)
        self.joint: Optional[JointStack] = None

    def _validate(self, dataset: SurvivalDataset) -> np.ndarray:
        if dataset.treatment is None:
            raise GComputationError(f"dataset has no treatment column '{self.spec.treatment_column}'")
        if dataset.n_events == 0:
            raise GComputationError("no events observed")
        times = self.spec.target_times
        if times is None:
            times = dataset.unique_event_times
        return _check_target_times(times, dataset.K)

    def point_estimates(self, dataset: SurvivalDataset) -> np.ndarray:
        """[risk1, risk0, rd] at the target times without variance estimation"""
        times = self._validate(dataset)
        joint = JointStack(self.spec, dataset, times)
        return joint.point_estimate()[joint.n_beta:]

    def fit(self, dataset: SurvivalDataset) -> RiskCurve:
        """
        Estimate risks, risk differences and their sandwich standard errors.

        Returns:
            RiskCurve at the target times
        """
        times = self._validate(dataset)
        joint = JointStack(self.spec, dataset, times)
        self.joint = joint
        theta_hat = joint.point_estimate()
        stack = joint(theta_hat)
        step = self.spec.solver_options.jacobian_step
        result = sandwich(bread(joint.mean, theta_hat, step), meat(stack), dataset.n, joint.names)

        nb, r = joint.n_beta, times.size
        estimates = theta_hat[nb:]
        se = result.se[nb:]
        lower, upper = wald_ci(estimates, se, self.spec.ci_level)
        ci = np.column_stack([lower, upper])
        pick = {key: slice(i * r, (i + 1) * r) for i, key in enumerate(('risk1', 'risk0', 'rd'))}
        curve = RiskCurve(
            times=times,
            risk1=estimates[pick['risk1']], risk0=estimates[pick['risk0']], rd=estimates[pick['rd']],
            se1=se[pick['risk1']], se0=se[pick['risk0']], se_rd=se[pick['rd']],
            ci1=ci[pick['risk1']], ci0=ci[pick['risk0']], ci_rd=ci[pick['rd']],
            ci_level=self.spec.ci_level,
            covariance=result.covariance,
            parameter_names=joint.names,
            fits=joint.fits,
        )
        self.logger.info(f"G-computation ({self.spec.time_spec} time, {self.spec.arm_strategy}): {curve}")
        return curve


def causal_contrast(spec: GComputationSpec, dataset: SurvivalDataset) -> RiskCurve:
    """Convenience wrapper: risk curve and risk differences for dataset under spec"""
    return GComputationEstimator(spec).fit(dataset)
