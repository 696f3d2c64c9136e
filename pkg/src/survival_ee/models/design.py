"""
Design Data Models

Declarative descriptions of the functional form for time and for the
covariates, plus the realized time design matrix
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from survival_ee.models.dataset import TimeGrid
from survival_ee.utils.constants import MIN_SPLINE_KNOTS, TIME_FORMS
from survival_ee.utils.exceptions import DesignError
from survival_ee.utils.helpers import parse_number_list


@dataclass(frozen=True)
class TimeDesignSpec:
    """
    Functional form for time.

    Args:
        form: intercept_only, linear, log_linear, spline or disjoint
        knots: Ascending spline knots in grid units (spline only)
        grid: Grid the design is realized on
    """
    form: str
    knots: Tuple[float, ...] = ()
    grid: Optional[TimeGrid] = None

    def __post_init__(self):
        if self.form not in TIME_FORMS:
            raise DesignError(f"Unknown time form: {self.form}")
        object.__setattr__(self, 'form', TIME_FORMS[self.form])
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, 'knots', knots)
        if self.form == 'spline':
            if len(knots) < MIN_SPLINE_KNOTS:
                raise DesignError(f"spline time needs at least {MIN_SPLINE_KNOTS} knots, got {len(knots)}")
            if np.any(np.diff(knots) <= 0):
                raise DesignError(f"spline knots must be strictly ascending: {knots}")
        elif knots:
            raise DesignError(f"knots only apply to the spline form, not {self.form}")

    @classmethod
    def parse(cls, text: str, knots: Sequence[float] = (), grid: Optional[TimeGrid] = None) -> 'TimeDesignSpec':
        """Parse the CLI spelling, e.g. 'loglinear' or 'spline:10,20,30,40'"""
        form, _, inline = str(text).partition(':')
        try:
            parsed = parse_number_list(inline) if inline else list(knots)
        except ValueError:
            raise DesignError(f"Invalid knot list in time model: {text}")
        return cls(form.strip().lower(), tuple(parsed), grid)

    @property
    def is_disjoint(self) -> bool:
        return self.form == 'disjoint'

    def __str__(self) -> str:
        if self.form == 'spline':
            return f"spline:{','.join(f'{k:g}' for k in self.knots)}"
        return self.form


@dataclass(frozen=True, eq=False)
class TimeDesignMatrix:
    """
    Realized time design S: one row per row_time, first column all ones.

    Smooth forms have rows 1..K; the disjoint form has rows at the unique
    event times K* and is square.
    """
    matrix: np.ndarray
    column_names: Tuple[str, ...]
    row_times: np.ndarray
    form: str
    rows_are_unique_event_times: bool = False

    @property
    def q(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def n_rows(self) -> int:
        return int(self.matrix.shape[0])

    def __str__(self) -> str:
        return f"TimeDesignMatrix({self.form}: {self.n_rows} x {self.q})"


@dataclass(frozen=True)
class CovariateDesign:
    """
    Covariate part g(A, W) of the pooled logistic model.

    Args:
        terms: Covariates entered linearly (default: every dataset covariate)
        splines: Covariate name -> knots; adds restricted truncated-power terms
        spline_power: 2 for quadratic, 3 for cubic
        treatment_term: Include A as a main effect (single-model strategy)
        treatment_interactions: Also include A x every covariate column
        intercept: Prepend a ones column (not needed when time carries one)
    """
    terms: Optional[Tuple[str, ...]] = None
    splines: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    spline_power: int = 3
    treatment_term: bool = False
    treatment_interactions: bool = False
    intercept: bool = False

    def __post_init__(self):
        if self.spline_power not in (2, 3):
            raise DesignError(f"spline_power must be 2 or 3, got {self.spline_power}")
        for name, knots in self.splines.items():
            if len(knots) < MIN_SPLINE_KNOTS:
                raise DesignError(f"spline for {name} needs at least {MIN_SPLINE_KNOTS} knots")
        if self.treatment_interactions and not self.treatment_term:
            raise DesignError("treatment_interactions requires treatment_term")
