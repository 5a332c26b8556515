"""
Score-driven generalized Pareto IV models for intraday returns and daily VaR.
"""

from gdvar.distributions import (
    Family,
    FisherScaling,
    GdParams,
    ScoreVector,
    cdf,
    density,
    fisher_scaling,
    log_density,
    quantile,
    sample,
    score,
    sf,
)
from gdvar.estimation import FitOptions, FittedSlotModel, aic, fit_mle, fit_static, negative_log_likelihood
from gdvar.exceptions import (
    DomainError,
    FilterError,
    GdVarError,
    IngestionError,
    NotFittableError,
    ParameterError,
)
from gdvar.filter import DcsCoefficients, FilterPath, FilterState, filter_step, run_filter, simulate, standardized_score

__version__ = "0.1.0"

__all__ = [
    "Family",
    "FisherScaling",
    "GdParams",
    "ScoreVector",
    "cdf",
    "density",
    "fisher_scaling",
    "log_density",
    "quantile",
    "sample",
    "score",
    "sf",
    "FitOptions",
    "FittedSlotModel",
    "aic",
    "fit_mle",
    "fit_static",
    "negative_log_likelihood",
    "DomainError",
    "FilterError",
    "GdVarError",
    "IngestionError",
    "NotFittableError",
    "ParameterError",
    "DcsCoefficients",
    "FilterPath",
    "FilterState",
    "filter_step",
    "run_filter",
    "simulate",
    "standardized_score",
    "__version__",
]
