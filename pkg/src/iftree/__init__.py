"""Item focussed trees and logistic baselines for DIF detection."""

from .data import (
    CovariateTable,
    Dataset,
    ResponseMatrix,
    ScoreVector,
    VariableSpec,
    compute_test_scores,
    load_covariates,
    load_responses,
    save_covariates,
    save_responses,
)
from .errors import DataError, IftreeError, NumericError, RankDeficientError, UsageError
from .glm import (
    DesignMatrix,
    LogisticFit,
    LrTestResult,
    chisq_sf,
    fit_logistic,
    log_likelihood,
    lr_test,
)

__version__ = "0.1.0"
