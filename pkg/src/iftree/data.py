"""Observed data: item responses, person covariates, test scores.

All containers are immutable after construction (arrays are made
non-writeable) and can safely be shared across parallel workers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SCALES = ("binary", "ordinal", "continuous")


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class VariableSpec:
    """Declared name and measurement scale of one covariate."""

    name: str
    scale: str

    def __post_init__(self):
        if self.scale not in SCALES:
            hint = ""
            if self.scale in ("nominal", "categorical", "factor"):
                hint = ("; nominal variables with more than two categories are not "
                        "supported directly, dummy-code them into binary columns")
            raise DataError(f"unknown scale {self.scale!r} for variable {self.name!r}, "
                            f"expected one of {SCALES}{hint}")


@dataclass(frozen=True)
class ResponseMatrix:
    """P x I matrix of dichotomous item responses."""

    item_names: tuple[str, ...]
    values: np.ndarray  # (P, I) int8 in {0, 1}

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DataError("response values must be a 2-d array")
        P, I = values.shape
        if P < 2 or I < 2:
            raise DataError(f"need at least 2 persons and 2 items, got {P} x {I}")
        if len(self.item_names) != I:
            raise DataError("number of item names must match number of columns")
        if len(set(self.item_names)) != I:
            dup = sorted({n for n in self.item_names if self.item_names.count(n) > 1})
            raise DataError(f"duplicate item name(s): {dup}")
        bad = ~np.isin(values, (0, 1))
        if bad.any():
            p, i = np.argwhere(bad)[0]
            raise DataError("response entries must be 0 or 1",
                            row=int(p) + 1, column=self.item_names[i])
        object.__setattr__(self, "item_names", tuple(self.item_names))
        object.__setattr__(self, "values", _frozen(values.astype(np.int8)))

    @property
    def n_persons(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CovariateTable:
    """P x m table of person covariates with declared scales."""

    variables: tuple[VariableSpec, ...]
    values: np.ndarray  # (P, m) float64

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("covariate values must be a 2-d array")
        P, m = values.shape
        if m < 1:
            raise DataError("need at least one covariate")
        if len(self.variables) != m:
            raise DataError("number of variable specs must match number of columns")
        names = [v.name for v in self.variables]
        if len(set(names)) != m:
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate variable name(s): {dup}")
        for j, var in enumerate(self.variables):
            col = values[:, j]
            if not np.isfinite(col).all():
                p = int(np.flatnonzero(~np.isfinite(col))[0])
                raise DataError("covariate entries must be finite numbers",
                                row=p + 1, column=var.name)
            if var.scale == "binary":
                bad = ~np.isin(col, (0.0, 1.0))
                if bad.any():
                    p = int(np.flatnonzero(bad)[0])
                    raise DataError(f"binary variable contains value {col[p]!r} outside {{0, 1}}",
                                    row=p + 1, column=var.name)
            elif var.scale == "ordinal":
                bad = col != np.floor(col)
                if bad.any():
                    p = int(np.flatnonzero(bad)[0])
                    raise DataError(f"ordinal variable contains non-integer value {col[p]!r}",
                                    row=p + 1, column=var.name)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n_persons(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass(frozen=True)
class ScoreVector:
    """Per-person test scores used as the ability proxy."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))


def compute_test_scores(responses: ResponseMatrix) -> ScoreVector:
    """Raw-sum test score over all items, one value per person."""
    return ScoreVector(responses.values.sum(axis=1).astype(np.float64))


@dataclass(frozen=True)
class Dataset:
    """Responses, covariates and scores bundled for the detectors.

    `rest_score` recomputes the score for item i without item i's own
    responses; `standardize` divides scores by the number of items.  Both
    are off by default.
    """

    responses: ResponseMatrix
    covariates: CovariateTable
    scores: ScoreVector = field(default=None)  # type: ignore[assignment]
    rest_score: bool = False
    standardize: bool = False

    def __post_init__(self):
        if self.covariates.n_persons != self.responses.n_persons:
            raise DataError(
                f"covariate table has {self.covariates.n_persons} persons but "
                f"response matrix has {self.responses.n_persons}")
        if self.scores is None:
            object.__setattr__(self, "scores", compute_test_scores(self.responses))

    @property
    def n_persons(self) -> int:
        return self.responses.n_persons

    @property
    def n_items(self) -> int:
        return self.responses.n_items

    def score_for_item(self, item: int) -> np.ndarray:
        s = self.scores.values
        if self.rest_score:
            s = s - self.responses.values[:, item]
        if self.standardize:
            s = s / self.n_items
        return s


# ---------------------------------------------------------------------------
# CSV / JSON ingestion
# ---------------------------------------------------------------------------


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if not header or any(not h.strip() for h in header):
        raise DataError(f"{path} has a malformed header row")
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"{path} row has {len(row)} cells, expected {len(header)}", row=r)
    return [h.strip() for h in header], body


def load_responses(path) -> ResponseMatrix:
    """Load a response CSV: header of item names, body of 0/1 cells."""
    header, body = _read_csv(path)
    if len(body) < 2:
        raise DataError(f"{path} needs at least 2 person rows")
    values = np.empty((len(body), len(header)), dtype=np.int8)
    for r, row in enumerate(body, start=1):
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "0":
                values[r - 1, c] = 0
            elif cell == "1":
                values[r - 1, c] = 1
            elif cell == "":
                raise DataError("missing response entry; drop incomplete persons "
                                "upstream (listwise deletion)", row=r, column=header[c])
            else:
                raise DataError(f"response entry {cell!r} is not 0 or 1",
                                row=r, column=header[c])
    return ResponseMatrix(tuple(header), values)


def save_responses(responses: ResponseMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(responses.item_names)
        w.writerows(responses.values.tolist())


def load_schema(path) -> tuple[VariableSpec, ...]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
    try:
        entries = doc["variables"]
        specs = tuple(VariableSpec(str(e["name"]), str(e["scale"])) for e in entries)
    except (KeyError, TypeError) as exc:
        raise DataError(f'{path} must look like {{"variables": [{{"name": ..., '
                        f'"scale": ...}}, ...]}}') from exc
    if not specs:
        raise DataError(f"{path} declares no variables")
    return specs


def load_covariates(path, schema) -> CovariateTable:
    """Load a covariate CSV against its JSON sidecar schema."""
    specs = load_schema(schema)
    header, body = _read_csv(path)
    declared = [s.name for s in specs]
    if header != declared:
        raise DataError(f"covariate columns {header} do not match schema variables {declared}")
    values = np.empty((len(body), len(header)), dtype=np.float64)
    for r, row in enumerate(body, start=1):
        for c, cell in enumerate(row):
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(f"covariate entry {cell.strip()!r} is not numeric",
                                row=r, column=header[c]) from None
    return CovariateTable(specs, values)


def save_covariates(cov: CovariateTable, path, schema_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cov.names)
        for row in cov.values:
            w.writerow([_format_num(v, spec) for v, spec in zip(row, cov.variables)])
    if schema_path is not None:
        doc = {"variables": [{"name": v.name, "scale": v.scale} for v in cov.variables]}
        with open(schema_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _format_num(v: float, spec: VariableSpec) -> str:
    if spec.scale in ("binary", "ordinal"):
        return str(int(v))
    return repr(float(v))
