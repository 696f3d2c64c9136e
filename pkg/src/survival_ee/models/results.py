"""
Result Data Models

Hazards, estimating-function stacks, solver diagnostics, fitted models,
sandwich variances and risk curves
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from survival_ee.models.design import CovariateDesign, TimeDesignMatrix
from survival_ee.utils.constants import RISK_CURVE_COLUMNS


@dataclass(frozen=True, eq=False)
class HazardMatrix:
    """Discrete-time hazards, rows at row_times and one column per unit"""
    values: np.ndarray
    row_times: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __str__(self) -> str:
        return f"HazardMatrix({self.shape[0]} x {self.shape[1]})"


@dataclass(frozen=True, eq=False)
class EFStack:
    """
    Stacked estimating functions psi(O_i; theta), one column per unit.

    parameter_layout maps block names (beta_x, beta_s, ...) to row slices.
    """
    matrix: np.ndarray
    parameter_layout: Dict[str, slice]

    @property
    def n(self) -> int:
        return int(self.matrix.shape[1])

    def mean(self) -> np.ndarray:
        return self.matrix.mean(axis=1)

    def block(self, name: str) -> np.ndarray:
        return self.matrix[self.parameter_layout[name]]

    def __str__(self) -> str:
        blocks = ', '.join(f"{k}={s.stop - s.start}" for k, s in self.parameter_layout.items())
        return f"EFStack({self.matrix.shape[0]} x {self.n}; {blocks})"


@dataclass
class SolveDiagnostics:
    """Outcome of a root-finding run"""
    iterations: int
    final_norm: float
    converged: bool
    condition: float = float('nan')
    damping: float = 0.0

    def to_dict(self) -> dict:
        return {
            'iterations': self.iterations,
            'final_norm': self.final_norm,
            'converged': self.converged,
            'condition': self.condition,
        }

    def __str__(self) -> str:
        state = 'converged' if self.converged else 'NOT converged'
        return f"{state} after {self.iterations} iterations (|mean EF|_inf={self.final_norm:.3e})"


@dataclass(eq=False)
class SandwichResult:
    """Bread B, meat F and the per-estimate covariance B^-1 F B^-T / n"""
    bread: np.ndarray
    meat: np.ndarray
    covariance: np.ndarray
    se: np.ndarray
    condition: float = float('nan')


@dataclass(eq=False)
class FitResult:
    """
    A fitted pooled logistic model.

    beta holds every coefficient (fixed disjoint coordinates included);
    covariance and se cover the free coordinates only, with NaN rows and
    columns for fixed ones.
    """
    beta: np.ndarray
    parameter_names: List[str]
    time_design: TimeDesignMatrix
    covariate_design: CovariateDesign
    covariate_names: List[str]
    diagnostics: SolveDiagnostics
    free: np.ndarray
    interact_time: bool = False
    covariance: Optional[np.ndarray] = None
    label: str = ''
    n: int = 0

    @property
    def fixed_parameters(self) -> List[str]:
        return [name for name, keep in zip(self.parameter_names, self.free) if not keep]

    @property
    def se(self) -> np.ndarray:
        if self.covariance is None:
            return np.full(self.beta.size, np.nan)
        return np.sqrt(np.diag(self.covariance))

    @property
    def hazard_ratios(self) -> Dict[str, float]:
        """exp(beta) for covariate terms, the Cox hazard-ratio approximation"""
        p = len(self.covariate_names)
        return {name: float(np.exp(b)) for name, b in zip(self.covariate_names, self.beta[:p])}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'parameter': self.parameter_names,
            'estimate': self.beta,
            'se': self.se,
            'fixed': ~self.free,
        })

    def __str__(self) -> str:
        label = f" [{self.label}]" if self.label else ''
        return f"FitResult{label}({len(self.parameter_names)} parameters, {self.diagnostics})"


@dataclass(eq=False)
class RiskEstimate:
    """Marginal risks under one treatment plan and their EF rows"""
    times: np.ndarray
    risks: np.ndarray
    ef_rows: np.ndarray
    plan: object = None


@dataclass(eq=False)
class RiskCurve:
    """Risks under a=1 and a=0, their difference, standard errors and Wald CIs"""
    times: np.ndarray
    risk1: np.ndarray
    risk0: np.ndarray
    rd: np.ndarray
    se1: np.ndarray
    se0: np.ndarray
    se_rd: np.ndarray
    ci1: np.ndarray
    ci0: np.ndarray
    ci_rd: np.ndarray
    ci_level: float
    covariance: Optional[np.ndarray] = None
    parameter_names: List[str] = field(default_factory=list)
    fits: Dict[str, FitResult] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'time': self.times,
            'risk1': self.risk1, 'se1': self.se1, 'lcl1': self.ci1[:, 0], 'ucl1': self.ci1[:, 1],
            'risk0': self.risk0, 'se0': self.se0, 'lcl0': self.ci0[:, 0], 'ucl0': self.ci0[:, 1],
            'rd': self.rd, 'se_rd': self.se_rd, 'lcl_rd': self.ci_rd[:, 0], 'ucl_rd': self.ci_rd[:, 1],
        })
        return frame[RISK_CURVE_COLUMNS]

    def at(self, time: int) -> dict:
        """Row of the curve at a target time"""
        index = int(np.flatnonzero(self.times == time)[0])
        return self.to_frame().iloc[index].to_dict()

    def __str__(self) -> str:
        last = len(self.times) - 1
        return (f"RiskCurve({len(self.times)} times; RD at {self.times[last]} = {self.rd[last]:.3f} "
                f"({self.ci_rd[last, 0]:.3f}, {self.ci_rd[last, 1]:.3f}))")
