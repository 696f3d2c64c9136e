"""
Survival Data Models

Contains the observed-data representation, the discrete time grid and the
indicator matrices (risk set, final time, events) that drive the score
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from survival_ee.data.validators import (
    validate_binary,
    validate_covariates,
    validate_observed_times,
    validate_weights,
)
from survival_ee.utils.exceptions import DataValidationError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeGrid:
    """K equally spaced intervals (0, s_1], ..., (s_{K-1}, s_K = tau]"""
    K: int
    resolution: float = 1.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DataValidationError(f"K must be a positive integer, got {self.K}")
        if not self.resolution > 0:
            raise DataValidationError(f"resolution must be > 0, got {self.resolution}")
        object.__setattr__(self, 'K', int(self.K))

    @property
    def interval_bounds(self) -> np.ndarray:
        """s_0 = 0 < s_1 < ... < s_K on the original time scale"""
        return self.resolution * np.arange(self.K + 1, dtype=float)

    @property
    def tau(self) -> float:
        return self.resolution * self.K

    @property
    def times(self) -> np.ndarray:
        """Integer interval labels 1..K"""
        return np.arange(1, self.K + 1, dtype=np.int64)

    def __str__(self) -> str:
        return f"TimeGrid(K={self.K}, resolution={self.resolution:g}, tau={self.tau:g})"


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """
    Per-unit records on a discrete time grid.

    Args:
        unit_id: Opaque identifier per unit
        covariates: n x p design matrix for the covariate part of the model
        observed_time: T*_i as integer grid times in 1..K
        event: Event indicator Delta_i
        covariate_names: Column labels for covariates
        treatment: Optional binary treatment A_i
        weights: Optional weights, per unit (n,) or per unit-time (n, K)
        grid: Time grid; defaults to K = max observed time
    """
    unit_id: np.ndarray
    covariates: np.ndarray
    observed_time: np.ndarray
    event: np.ndarray
    covariate_names: Tuple[str, ...] = ()
    treatment: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    grid: Optional[TimeGrid] = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.observed_time)
        if times.ndim != 1 or times.size == 0:
            raise DataValidationError("no records")
        n = times.size
        grid = self.grid
        if grid is None:
            raw = np.asarray(times, dtype=float)
            grid = TimeGrid(int(np.nanmax(raw)) if np.all(np.isfinite(raw)) and raw.max() >= 1 else 1)
        times = validate_observed_times(times, grid.K)
        event = validate_binary(self.event, 'event')
        covariates = validate_covariates(self.covariates if np.size(self.covariates) else np.empty((n, 0)))
        if event.shape != (n,) or covariates.shape[0] != n:
            raise DataValidationError(
                f"length mismatch: {n} times, {event.shape[0]} events, {covariates.shape[0]} covariate rows")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(covariates.shape[1]))
        if len(names) != covariates.shape[1]:
            raise DataValidationError(f"{len(names)} covariate names for {covariates.shape[1]} columns")

        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'observed_time', _frozen(times))
        object.__setattr__(self, 'event', _frozen(event))
        object.__setattr__(self, 'covariates', _frozen(covariates))
        object.__setattr__(self, 'covariate_names', names)
        object.__setattr__(self, 'unit_id', _frozen(np.asarray(self.unit_id)))
        if self.unit_id.shape != (n,):
            raise DataValidationError(f"unit_id must have length {n}")
        if self.treatment is not None:
            object.__setattr__(self, 'treatment', _frozen(validate_binary(self.treatment, 'treatment')))
            if self.treatment.shape != (n,):
                raise DataValidationError(f"treatment must have length {n}")
        if self.weights is not None:
            object.__setattr__(self, 'weights', _frozen(validate_weights(self.weights, n, grid.K)))

    @property
    def n(self) -> int:
        return int(self.observed_time.size)

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def K(self) -> int:
        return self.grid.K

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @property
    def person_periods(self) -> int:
        """Row count of the person-period expansion, sum of T*_i"""
        return int(self.observed_time.sum())

    @property
    def unique_event_times(self) -> np.ndarray:
        """Ascending grid times at which at least one event occurred (K*)"""
        return np.unique(self.observed_time[self.event == 1])

    def weight_matrix(self, row_times: Sequence[int]) -> Optional[np.ndarray]:
        """
        Weights omega_{i,k} laid out as a (rows x n) matrix.

        Args:
            row_times: Grid times forming the rows

        Returns:
            Matrix of weights, or None when the dataset is unweighted
        """
        if self.weights is None:
            return None
        row_times = np.asarray(row_times, dtype=np.int64)
        if self.weights.ndim == 1:
            return np.broadcast_to(self.weights, (row_times.size, self.n)).copy()
        return self.weights[:, row_times - 1].T.copy()

    def subset(self, index, relabel: bool = False) -> 'SurvivalDataset':
        """
        Select units by boolean mask or integer positions (repeats allowed).

        Args:
            index: Mask or positions
            relabel: Give units fresh ids 0..m-1 (used for resampled blocks)
        """
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        if index.size == 0:
            raise DataValidationError("no records")
        return SurvivalDataset(
            unit_id=np.arange(index.size) if relabel else self.unit_id[index],
            covariates=self.covariates[index],
            observed_time=self.observed_time[index],
            event=self.event[index],
            covariate_names=self.covariate_names,
            treatment=None if self.treatment is None else self.treatment[index],
            weights=None if self.weights is None else self.weights[index],
            grid=self.grid,
        )

    def with_covariates(self, covariates: np.ndarray, names: Sequence[str]) -> 'SurvivalDataset':
        """Copy of the dataset with a different covariate design matrix"""
        return SurvivalDataset(
            unit_id=self.unit_id,
            covariates=covariates,
            observed_time=self.observed_time,
            event=self.event,
            covariate_names=tuple(names),
            treatment=self.treatment,
            weights=self.weights,
            grid=self.grid,
        )

    def __str__(self) -> str:
        return f"SurvivalDataset(n={self.n}, p={self.p}, events={self.n_events}, K={self.K})"

    def __repr__(self) -> str:
        return (f"SurvivalDataset(n={self.n}, covariates={list(self.covariate_names)}, "
                f"events={self.n_events}, treated={None if self.treatment is None else int(self.treatment.sum())}, "
                f"weighted={self.weights is not None}, grid={self.grid})")


@dataclass(frozen=True, eq=False)
class IndicatorMatrices:
    """
    Risk set R, final time R* and event Y matrices, rows indexed by row_times.

    Every column of R is a prefix of ones; every column of R* holds at most
    one 1 (exactly one when all grid times are rows).
    """
    risk_set: np.ndarray
    final_time: np.ndarray
    events: np.ndarray
    row_times: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.risk_set.shape

    def __str__(self) -> str:
        rows, n = self.shape
        return f"IndicatorMatrices({rows} x {n}, at-risk={int(self.risk_set.sum())}, events={int(self.events.sum())})"
