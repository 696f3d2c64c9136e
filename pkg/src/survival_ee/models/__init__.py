"""
Survival EE Models Package

Core data models for datasets, designs, estimating-function stacks and results
"""

from .dataset import SurvivalDataset, TimeGrid, IndicatorMatrices
from .design import TimeDesignSpec, TimeDesignMatrix, CovariateDesign
from .results import (
    HazardMatrix, EFStack, SolveDiagnostics, SandwichResult,
    FitResult, RiskEstimate, RiskCurve,
)

__all__ = [
    'SurvivalDataset', 'TimeGrid', 'IndicatorMatrices',
    'TimeDesignSpec', 'TimeDesignMatrix', 'CovariateDesign',
    'HazardMatrix', 'EFStack', 'SolveDiagnostics', 'SandwichResult',
    'FitResult', 'RiskEstimate', 'RiskCurve',
]
