"""
Risk-set, final-time and event indicator matrices
"""

from typing import Optional, Sequence

import numpy as np

from survival_ee.models.dataset import IndicatorMatrices, SurvivalDataset, TimeGrid
from survival_ee.utils.exceptions import DataValidationError


def indicator_matrices(dataset: SurvivalDataset, grid: Optional[TimeGrid] = None,
                       row_times: Optional[Sequence[int]] = None) -> IndicatorMatrices:
    """
    Build R, R* and Y = Delta (.) R* with one row per grid time.

    On the integer grid I(T* >= s_k) and I(T* > s_{k-1}) coincide, so the
    risk set is simply T*_i >= k.

    Args:
        dataset: Observed data
        grid: Grid to use (defaults to the dataset's)
        row_times: Subset of grid times for the rows (e.g. unique event
            times for the disjoint form); defaults to 1..K

    Returns:
        IndicatorMatrices
    """
    grid = grid or dataset.grid
    if dataset.observed_time.max() > grid.K:
        raise DataValidationError(f"observed times exceed K={grid.K}")
    rows = grid.times if row_times is None else np.asarray(row_times, dtype=np.int64)
    times = dataset.observed_time
    risk_set = (times[None, :] >= rows[:, None]).astype(np.int8)
    final_time = (times[None, :] == rows[:, None]).astype(np.int8)
    events = final_time * dataset.event[None, :].astype(np.int8)
    return IndicatorMatrices(risk_set, final_time, events, rows)
