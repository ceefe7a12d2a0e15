"""Bayesian semiparametric estimation and optimization of dynamic treatment
rules for multi-course treatment sequences with survival outcomes."""

from ._core import (
    Cohort,
    ConfigurationError,
    DataValidationError,
    Draws,
    ParseError,
    Rule,
    Schema,
    SimDesign,
    __version__,
    encode_waiting_time,
    fit,
    gcompute,
    hdi_set,
    optimize,
    piecewise_sample_waiting_time,
    piecewise_survival,
    simulate_cohort,
    true_survival,
)

__all__ = [
    "Cohort",
    "ConfigurationError",
    "DataValidationError",
    "Draws",
    "ParseError",
    "Rule",
    "Schema",
    "SimDesign",
    "__version__",
    "encode_waiting_time",
    "fit",
    "gcompute",
    "hdi_set",
    "optimize",
    "piecewise_sample_waiting_time",
    "piecewise_survival",
    "simulate_cohort",
    "true_survival",
]
