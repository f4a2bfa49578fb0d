"""Semiparametric linear transformation models for right-censored survival
data with error-prone covariates corrected through instrumental variables."""

from .data import SurvivalDataset, risk_sets
from .errors import IVTransError
from .estimate import FitOptions, FitResult, fit, fit_design, score_U1
from .fileio import ColumnMapping, read_dataset, read_report, write_report
from .hazard import (
    HazardFamily,
    cumulative_hazard,
    hazard,
    hazard_derivative,
    sample_error,
    survival,
)
from .iv import IVRegressionFit, estimate_Q, impute_design
from .simulate import CaseSpec, MetricsReport, calibrate_censoring, coverage_study, generate_case, run_study
from .transform import StepTransform, cumhaz_increments, solve_transform
from .variance import (
    bootstrap_covariance,
    confidence_intervals,
    estimate_B,
    martingale_residuals,
    sandwich_covariance,
)

__all__ = [
    "CaseSpec", "ColumnMapping", "FitOptions", "FitResult", "HazardFamily", "IVRegressionFit",
    "IVTransError", "MetricsReport", "StepTransform", "SurvivalDataset", "bootstrap_covariance",
    "calibrate_censoring", "confidence_intervals", "coverage_study", "cumhaz_increments",
    "cumulative_hazard", "estimate_B", "estimate_Q", "fit", "fit_design", "generate_case", "hazard",
    "hazard_derivative", "impute_design", "martingale_residuals", "read_dataset", "read_report",
    "risk_sets", "run_study", "sample_error", "sandwich_covariance", "score_U1", "solve_transform",
    "survival", "write_report",
]
