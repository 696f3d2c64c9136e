"""
Shared fixtures: src on sys.path and the six-unit worked example
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the src directory to Python path
project_root = Path(__file__).parent.parent
src_path = project_root / "src"
sys.path.insert(0, str(src_path))

from survival_ee.core.time_design import build_design  # noqa: E402
from survival_ee.models.dataset import SurvivalDataset, TimeGrid  # noqa: E402
from survival_ee.models.design import TimeDesignSpec  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running reproduction checks')


WORKED_TIMES = [1, 2, 2, 4, 4, 5]
WORKED_EVENTS = [1, 1, 0, 1, 0, 0]
WORKED_X = [-1, 1, -1, 0, 2, -2]

#stacked score at beta_X = 0.2, beta_S = (-1, 0.1) with linear time
#unit 4, S:t row: -0.289 - 2(0.310) - 3(0.332) + 4(0.646) = +0.678
WORKED_SMOOTH_STACK = np.array([
    [-0.750, 0.314, 0.519, 0.000, -3.309, 2.507],
    [0.750, 0.314, -0.519, -0.285, -1.655, -1.253],
    [0.750, 0.960, -0.788, 0.678, -4.258, -3.947],
])

#stacked score at beta_X = 0.2, beta_S = (-1, 0.1, -0.1) with disjoint indicators
WORKED_DISJOINT_STACK = np.array([
    [-0.769, 0.358, 0.481, 0.000, -2.127, 1.189],
    [0.769, -0.310, -0.231, -0.269, -0.354, -0.198],
    [0.000, 0.668, -0.250, -0.289, -0.378, -0.214],
    [0.000, 0.000, 0.000, 0.750, -0.332, -0.182],
])


@pytest.fixture
def worked_dataset():
    return SurvivalDataset(
        unit_id=np.arange(1, 7),
        covariates=np.array(WORKED_X, dtype=float)[:, None],
        observed_time=WORKED_TIMES,
        event=WORKED_EVENTS,
        covariate_names=('X',),
        grid=TimeGrid(5),
    )


@pytest.fixture
def linear_design(worked_dataset):
    return build_design(TimeDesignSpec('linear'), grid=worked_dataset.grid)


@pytest.fixture
def disjoint_design(worked_dataset):
    return build_design(TimeDesignSpec('disjoint'), worked_dataset.unique_event_times,
                        grid=worked_dataset.grid)


def make_cohort(n, seed, p=1, K=12, treatment=False, weights=None):
    """Random small cohort with p covariates and a logistic-in-time event process"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    A = rng.integers(0, 2, n) if treatment else None
    hazard_logit = -2.0 + 0.4 * X[:, 0] + (0.0 if A is None else -0.5 * A)
    times = np.full(n, K)
    events = np.zeros(n, dtype=int)
    censor = rng.integers(1, K + 1, n)
    for i in range(n):
        for k in range(1, K + 1):
            if rng.random() < 1.0 / (1.0 + np.exp(-(hazard_logit[i] + 0.05 * k))):
                times[i], events[i] = k, 1
                break
        if censor[i] < times[i]:
            times[i], events[i] = censor[i], 0
    if weights == 'unit':
        w = rng.uniform(0.5, 2.0, n)
    elif weights == 'unit_time':
        w = rng.uniform(0.5, 2.0, (n, K))
    else:
        w = None
    return SurvivalDataset(
        unit_id=np.arange(n),
        covariates=X,
        observed_time=times,
        event=events,
        covariate_names=tuple(f"x{j}" for j in range(p)),
        treatment=A,
        weights=w,
        grid=TimeGrid(K),
    )


@pytest.fixture
def cohort_factory():
    return make_cohort
