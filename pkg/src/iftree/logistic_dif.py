"""Score-based logistic DIF detectors.

Two model families are provided.  The classical detector compares G
predefined groups of one categorical variable through dummy-coded
intercept (and optionally slope) offsets.  The extended detector lets a
whole covariate vector shift the intercept (uniform DIF) and, for the
non-uniform strategies, interact with the test score.

Strategies follow the usual terminology:

- ``udif``: H0 gamma_i = 0 against intercept offsets only
- ``dif``: H0 gamma_i = alpha_i = 0, offsets and score interactions jointly
- ``nudif``: H0 alpha_i = 0, score interactions given free intercept offsets

Each item is tested separately with a likelihood-ratio test at level
alpha; no correction across items is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import UsageError
from .glm import DesignMatrix, LogisticFit, LrTestResult, fit_logistic, lr_test

STRATEGIES = ("udif", "dif", "nudif")
MODES = ("classical_groups", "extended_vector")


@dataclass(frozen=True)
class ItemModelSpec:
    """Which detector to run: strategy, model family, optional grouping variable."""

    strategy: str
    mode: str = "extended_vector"
    group_variable: str | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.mode == "classical_groups" and not self.group_variable:
            raise UsageError("classical_groups mode needs a group_variable")


@dataclass(frozen=True)
class ItemTestResult:
    item: int
    strategy: str
    lr: LrTestResult
    flagged: bool
    parameter_names: tuple[str, ...]
    parameters: np.ndarray
    full_fit: LogisticFit
    restricted_fit: LogisticFit


def _interactions(score: np.ndarray, cols: np.ndarray, names: list[str]):
    inter = score[:, None] * cols
    return inter, [f"score:{n}" for n in names]


def _extended_designs(data: Dataset, item: int, strategy: str):
    score = data.score_for_item(item)
    cov = data.covariates.values
    names = list(data.covariates.names)
    n = data.n_persons
    ones = np.ones(n)

    base = np.column_stack([ones, score])
    base_names = ["(intercept)", "score"]
    uniform = np.column_stack([base, cov])
    uniform_names = base_names + names
    inter, inter_names = _interactions(score, cov, names)
    full_non = np.column_stack([uniform, inter])
    full_non_names = uniform_names + inter_names

    m = cov.shape[1]
    if strategy == "udif":
        return (uniform, uniform_names), (base, base_names), m
    if strategy == "dif":
        return (full_non, full_non_names), (base, base_names), 2 * m
    return (full_non, full_non_names), (uniform, uniform_names), m


def _group_dummies(data: Dataset, variable: str):
    col = data.covariates.column(variable)
    levels: list[float] = []
    for v in col:
        if v not in levels:
            levels.append(v)
    if len(levels) < 2:
        raise UsageError(f"group variable {variable!r} has fewer than 2 levels")
    ref, rest = levels[0], levels[1:]
    cols = np.column_stack([(col == lv).astype(np.float64) for lv in rest])
    names = [f"{variable}={_level_label(lv)}" for lv in rest]
    return cols, names, ref


def _level_label(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _classical_designs(data: Dataset, item: int, variable: str, strategy: str):
    score = data.score_for_item(item)
    dummies, dummy_names, _ = _group_dummies(data, variable)
    n = data.n_persons
    ones = np.ones(n)

    base = np.column_stack([ones, score])
    base_names = ["(intercept)", "score"]
    uniform = np.column_stack([base, dummies])
    uniform_names = base_names + dummy_names
    inter, inter_names = _interactions(score, dummies, dummy_names)
    full_non = np.column_stack([uniform, inter])
    full_non_names = uniform_names + inter_names

    g1 = dummies.shape[1]
    if strategy == "udif":
        return (uniform, uniform_names), (base, base_names), g1
    if strategy == "dif":
        return (full_non, full_non_names), (base, base_names), 2 * g1
    return (full_non, full_non_names), (uniform, uniform_names), g1


def _run_test(data: Dataset, item: int, strategy: str, designs, alpha: float) -> ItemTestResult:
    (xf, nf), (xr, nr), df = designs
    y = data.responses.values[:, item].astype(np.float64)
    full = fit_logistic(DesignMatrix(tuple(nf), xf), y)
    restricted = fit_logistic(DesignMatrix(tuple(nr), xr), y)
    lr = lr_test(full, restricted, df)
    return ItemTestResult(
        item=item, strategy=strategy, lr=lr, flagged=lr.p_value < alpha,
        parameter_names=tuple(nf), parameters=full.coefficients,
        full_fit=full, restricted_fit=restricted,
    )


def fit_udif_extended(item: int, data: Dataset, alpha: float = 0.05) -> ItemTestResult:
    """Uniform-DIF test of one item against the whole covariate vector."""
    return _run_test(data, item, "udif", _extended_designs(data, item, "udif"), alpha)


def fit_dif_extended(item: int, data: Dataset, alpha: float = 0.05) -> ItemTestResult:
    """Joint test for uniform and non-uniform DIF (df = 2m)."""
    return _run_test(data, item, "dif", _extended_designs(data, item, "dif"), alpha)


def fit_nudif_extended(item: int, data: Dataset, alpha: float = 0.05) -> ItemTestResult:
    """Test of the score interactions only (non-uniform DIF, df = m)."""
    return _run_test(data, item, "nudif", _extended_designs(data, item, "nudif"), alpha)


def fit_classical_groups(item: int, data: Dataset, group_variable: str,
                         strategy: str = "udif", alpha: float = 0.05) -> ItemTestResult:
    """Multiple-group logistic DIF test with the first observed level as reference."""
    if strategy not in STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    designs = _classical_designs(data, item, group_variable, strategy)
    return _run_test(data, item, strategy, designs, alpha)


def run_classical_suite(data: Dataset, spec: ItemModelSpec,
                        alpha: float = 0.05) -> list[ItemTestResult]:
    """Apply the chosen detector to every item; results ordered by item index."""
    out = []
    for item in range(data.n_items):
        if spec.mode == "classical_groups":
            out.append(fit_classical_groups(item, data, spec.group_variable,
                                            spec.strategy, alpha))
        else:
            fn = {"udif": fit_udif_extended, "dif": fit_dif_extended,
                  "nudif": fit_nudif_extended}[spec.strategy]
            out.append(fn(item, data, alpha))
    return out
