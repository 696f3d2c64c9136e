"""
Survival Data Loaders

Handles reading per-unit survival records from CSV files and coarsening
continuous times onto an equally spaced grid
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from survival_ee.models.dataset import SurvivalDataset, TimeGrid
from survival_ee.utils.exceptions import DataValidationError, SchemaError

logger = logging.getLogger(__name__)

#first data row sits on line 2 of the file
_HEADER_OFFSET = 2


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping from a CSV file onto SurvivalDataset fields"""
    time_col: str
    event_col: str
    id_col: Optional[str] = None
    covariate_cols: Tuple[str, ...] = ()
    treatment_col: Optional[str] = None
    weight_col: Optional[str] = None

    @property
    def required_columns(self) -> Tuple[str, ...]:
        optional = (self.id_col, self.treatment_col, self.weight_col)
        return (self.time_col, self.event_col) + tuple(self.covariate_cols) + tuple(c for c in optional if c)


def discretize(raw_times: Sequence[float], resolution: float = 1.0,
               tau: Optional[float] = None) -> Tuple[np.ndarray, TimeGrid]:
    """
    Map raw times onto interval labels ceil(t / resolution).

    Args:
        raw_times: Positive event/censoring times on the original scale
        resolution: Interval width (e.g. 30.44 to go from days to months)
        tau: Optional end of follow-up; K = ceil(tau / resolution)

    Returns:
        Tuple of (integer grid times, TimeGrid)

    Raises:
        DataValidationError: For non-positive times or resolution
    """
    if not resolution > 0:
        raise DataValidationError(f"resolution must be > 0, got {resolution}")
    raw = np.asarray(raw_times, dtype=float)
    if raw.size == 0:
        raise DataValidationError("no records")
    bad = ~np.isfinite(raw) | (raw <= 0)
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise DataValidationError(f"time must be a positive number, got {raw[row]}", row=row)

    # rounding guards exact multiples against float noise (1.1 / 0.1 -> 11)
    grid_times = np.ceil(np.round(raw / resolution, 9)).astype(np.int64)
    K = int(grid_times.max())
    if tau is not None:
        K_tau = int(np.ceil(np.round(tau / resolution, 9)))
        if K_tau < K:
            row = int(np.flatnonzero(grid_times > K_tau)[0])
            raise DataValidationError(f"time {raw[row]} lies beyond tau={tau}", row=row)
        K = K_tau
    return grid_times, TimeGrid(K, resolution)


def load_csv(path: Union[str, Path], schema: CsvSchema, resolution: float = 1.0,
             tau: Optional[float] = None) -> SurvivalDataset:
    """
    Load a validated SurvivalDataset from a CSV file.

    Rows with a missing value in any mapped column are skipped with a warning
    naming their line; every other contract violation raises.

    Args:
        path: CSV file with a header row
        schema: Column mapping
        resolution: Grid interval width on the file's time scale
        tau: Optional end of follow-up

    Returns:
        SurvivalDataset

    Raises:
        SchemaError: If the file is missing or mapped columns are absent
        DataValidationError: For empty files or invalid records
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataValidationError("no records")

    missing = [c for c in schema.required_columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"Missing required columns: {missing}")
    if frame.empty:
        raise DataValidationError("no records")

    mapped = frame[list(schema.required_columns)]
    incomplete = mapped.isna().any(axis=1).to_numpy()
    if incomplete.any():
        lines = (np.flatnonzero(incomplete) + _HEADER_OFFSET).tolist()
        logger.warning(f"Skipping {len(lines)} rows with missing values (lines {lines[:10]})")
    lines = np.flatnonzero(~incomplete) + _HEADER_OFFSET
    frame = frame.loc[~incomplete].reset_index(drop=True)
    if frame.empty:
        raise DataValidationError("no records")

    def _numeric(column: str) -> np.ndarray:
        values = pd.to_numeric(frame[column], errors='coerce').to_numpy(dtype=float)
        if np.isnan(values).any():
            row = int(np.flatnonzero(np.isnan(values))[0])
            raise DataValidationError(f"column '{column}' is not numeric: {frame[column].iloc[row]!r}",
                                      row=row)
        return values

    try:
        times, grid = discretize(_numeric(schema.time_col), resolution, tau)
        dataset = SurvivalDataset(
            unit_id=frame[schema.id_col].to_numpy() if schema.id_col else np.arange(len(frame)),
            covariates=np.column_stack([_numeric(c) for c in schema.covariate_cols])
            if schema.covariate_cols else np.empty((len(frame), 0)),
            observed_time=times,
            event=_numeric(schema.event_col),
            covariate_names=tuple(schema.covariate_cols),
            treatment=_numeric(schema.treatment_col) if schema.treatment_col else None,
            weights=_numeric(schema.weight_col) if schema.weight_col else None,
            grid=grid,
        )
    except DataValidationError as e:
        if e.row is None or e.row >= len(lines):
            raise
        # report the file line rather than the position among kept rows
        message = str(e).split(': ', 1)[-1]
        raise DataValidationError(message, row=int(lines[e.row]))

    logger.info(f"Loaded {dataset.n} units with {dataset.n_events} events from {path.name} ({grid})")
    return dataset
