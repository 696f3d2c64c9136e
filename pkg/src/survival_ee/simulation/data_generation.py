"""
Simulated Cohorts

A single baseline confounder W drives both treatment and Weibull-type
potential event times; censoring is exponential and non-informative.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from survival_ee.models.dataset import SurvivalDataset, TimeGrid
from survival_ee.utils.constants import (
    SIM_CENSOR_MEAN,
    SIM_CONFOUNDER_SCALE,
    SIM_SCALE_TREATED,
    SIM_SCALE_UNTREATED,
    SIM_SHAPE_TREATED,
    SIM_SHAPE_UNTREATED,
    SIM_TREATMENT_SLOPE,
    SIM_TRUTH_CHUNK,
    SIM_TRUTH_DRAWS,
    SIM_TRUTH_SEED,
)
from survival_ee.utils.exceptions import DataValidationError

logger = logging.getLogger(__name__)

Seed = Union[int, Sequence[int]]


@dataclass(eq=False)
class SimulatedCohort:
    """Observed dataset plus the potential outcomes and censoring times behind it"""
    dataset: SurvivalDataset
    W: np.ndarray
    A: np.ndarray
    T1: np.ndarray
    T0: np.ndarray
    C: np.ndarray

    @property
    def T(self) -> np.ndarray:
        return np.where(self.A == 1, self.T1, self.T0)


def _uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # (0, 1] so that -ln(U) stays finite
    return 1.0 - rng.random(n)


def _weibull_time(rng: np.random.Generator, W: np.ndarray, scale: float, shape: float) -> np.ndarray:
    draw = (scale + SIM_CONFOUNDER_SCALE * W) * (-np.log(_uniform(rng, W.size))) ** (1.0 / shape)
    return np.maximum(np.ceil(draw), 1).astype(np.int64)


def _potential_times(rng: np.random.Generator, W: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    T1 = _weibull_time(rng, W, SIM_SCALE_TREATED, SIM_SHAPE_TREATED)
    T0 = _weibull_time(rng, W, SIM_SCALE_UNTREATED, SIM_SHAPE_UNTREATED)
    return T1, T0


def generate_cohort(n: int, seed: Seed) -> SimulatedCohort:
    """
    Draw one cohort.

    W ~ Uniform(-1, 1); A ~ Bernoulli(expit(-1.5 W)); potential times
    T^a = ceil((scale_a + 5 W)(-ln U)^(1 / shape_a)); censoring
    C = ceil(-38 ln U); T* = min(T, C) and Delta = I(T <= C). The grid runs
    to the largest observed time.

    Args:
        n: Cohort size
        seed: Anything np.random.default_rng accepts

    Returns:
        SimulatedCohort
    """
    if n < 1:
        raise DataValidationError(f"cohort size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, n)
    A = (rng.random(n) < expit(SIM_TREATMENT_SLOPE * W)).astype(np.int64)
    T1, T0 = _potential_times(rng, W)
    C = np.maximum(np.ceil(-SIM_CENSOR_MEAN * np.log(_uniform(rng, n))), 1).astype(np.int64)

    T = np.where(A == 1, T1, T0)
    observed = np.minimum(T, C)
    event = (T <= C).astype(np.int64)
    dataset = SurvivalDataset(
        unit_id=np.arange(n),
        covariates=W[:, None],
        observed_time=observed,
        event=event,
        covariate_names=('W',),
        treatment=A,
        grid=TimeGrid(int(observed.max())),
    )
    return SimulatedCohort(dataset, W, A, T1, T0, C)


@lru_cache(maxsize=4)
def _potential_outcome_cdfs(n_draws: int, seed: int, chunk: int) -> Tuple[np.ndarray, np.ndarray]:
    counts1 = np.zeros(1, dtype=np.int64)
    counts0 = np.zeros(1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    remaining = n_draws
    while remaining > 0:
        size = min(chunk, remaining)
        W = rng.uniform(-1.0, 1.0, size)
        T1, T0 = _potential_times(rng, W)
        counts1 = _accumulate(counts1, T1)
        counts0 = _accumulate(counts0, T0)
        remaining -= size
    logger.info(f"Potential-outcome oracle built from {n_draws} draws (seed {seed})")
    return np.cumsum(counts1) / n_draws, np.cumsum(counts0) / n_draws


def _accumulate(counts: np.ndarray, times: np.ndarray) -> np.ndarray:
    new = np.bincount(times, minlength=counts.size)
    new[:counts.size] += counts
    return new


def _cdf(cdf: np.ndarray, t: int) -> float:
    if t <= 0:
        return 0.0
    return float(cdf[min(t, cdf.size - 1)])


def true_effect(t: int, n_draws: int = SIM_TRUTH_DRAWS, seed: int = SIM_TRUTH_SEED,
                chunk: int = SIM_TRUTH_CHUNK) -> float:
    """
    Pr(T^1 <= t) - Pr(T^0 <= t) approximated from n_draws potential-outcome draws.

    The draws are made once per (n_draws, seed) and cached.
    """
    if t <= 0:
        return 0.0
    cdf1, cdf0 = _potential_outcome_cdfs(int(n_draws), int(seed), int(chunk))
    return _cdf(cdf1, int(t)) - _cdf(cdf0, int(t))
