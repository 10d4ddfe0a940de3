"""Scoring detector output against simulation ground truth.

True/false positive rates are reported on the item level and, when the
detector attributes DIF to variables (trees do, the logistic baselines do
not), on the item x variable level.  Rates with an empty denominator are
absent (None), never coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .simulate import GroundTruth
from .trees import GrowthResult


@dataclass(frozen=True)
class DetectionResult:
    """Flags produced by one detector on one dataset."""

    item_flags: np.ndarray                 # (I,) in {0, 1}
    delta_hat: np.ndarray | None = None    # (I, m), trees only
    p_values: np.ndarray | None = None     # (I,), baselines only

    def __post_init__(self):
        flags = np.asarray(self.item_flags, dtype=np.int8)
        object.__setattr__(self, "item_flags", flags)
        if self.delta_hat is not None:
            dh = np.asarray(self.delta_hat, dtype=np.int8)
            if dh.shape[0] != flags.shape[0]:
                raise UsageError("delta_hat and item_flags disagree on item count")
            if not np.array_equal(dh.any(axis=1).astype(np.int8), flags):
                raise UsageError("item_flags must equal nonzero rows of delta_hat")
            object.__setattr__(self, "delta_hat", dh)


@dataclass(frozen=True)
class Metrics:
    tpr_item: float | None
    fpr_item: float | None
    tpr_item_variable: float | None = None
    fpr_item_variable: float | None = None

    FIELDS = ("tpr_item", "fpr_item", "tpr_item_variable", "fpr_item_variable")


def _rate(hits: np.ndarray, mask: np.ndarray) -> float | None:
    denom = int(mask.sum())
    if denom == 0:
        return None
    return float(hits[mask].sum() / denom)


def compute_metrics(truth: GroundTruth, result: DetectionResult) -> Metrics:
    """TPR/FPR on the item and item x variable level."""
    has_dif = truth.item_has_dif
    flags = result.item_flags.astype(bool)
    if flags.shape[0] != has_dif.shape[0]:
        raise UsageError("truth and detection disagree on item count")
    tpr_i = _rate(flags, has_dif)
    fpr_i = _rate(flags, ~has_dif)
    tpr_iv = fpr_iv = None
    if result.delta_hat is not None:
        if result.delta_hat.shape != truth.delta.shape:
            raise UsageError("truth and detection disagree on delta shape")
        hat = result.delta_hat.astype(bool)
        dif = truth.delta.astype(bool)
        tpr_iv = _rate(hat.ravel(), dif.ravel())
        fpr_iv = _rate(hat.ravel(), ~dif.ravel())
    return Metrics(tpr_i, fpr_i, tpr_iv, fpr_iv)


def aggregate(metrics: list[Metrics]) -> dict[str, dict[str, float]]:
    """Mean and quartiles per metric field, skipping absent values."""
    out: dict[str, dict[str, float]] = {}
    for f in Metrics.FIELDS:
        vals = [getattr(m, f) for m in metrics if getattr(m, f) is not None]
        if not vals:
            continue
        arr = np.asarray(vals, dtype=np.float64)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        out[f] = {"mean": float(arr.mean()), "q1": float(q1),
                  "median": float(med), "q3": float(q3), "n": len(vals)}
    return out


# ---------------------------------------------------------------------------
# Alpha-indexed detections for ROC tracing
# ---------------------------------------------------------------------------


class ScoredBaseline:
    """Per-item p-values; an item is flagged when p < alpha."""

    def __init__(self, p_values, n_variables: int | None = None):
        self.p_values = np.asarray(p_values, dtype=np.float64)
        self.n_variables = n_variables

    def at_alpha(self, alpha: float) -> DetectionResult:
        flags = (self.p_values < alpha).astype(np.int8)
        return DetectionResult(flags, None, self.p_values)


class ScoredGrowth:
    """Re-traces a grown tree's stopping rule at smaller significance levels.

    Exact for the stop-at-first-failure rule: the sequence of candidate
    selections does not depend on alpha, so the splits accepted at any
    alpha' <= alpha form a prefix of the recorded test trail.
    """

    def __init__(self, growth: GrowthResult, n_items: int, variables: tuple[str, ...]):
        if growth.per_item_stopping:
            raise UsageError("ROC re-tracing requires the stop-at-first-failure rule")
        self.growth = growth
        self.n_items = n_items
        self.variables = variables

    def at_alpha(self, alpha: float) -> DetectionResult:
        g = self.growth
        if alpha > g.alpha + 1e-12:
            raise UsageError(f"growth ran at alpha={g.alpha}; cannot re-trace at "
                             f"larger alpha={alpha}")
        local = alpha * (g.local_alpha / g.alpha)
        delta = np.zeros((self.n_items, len(self.variables)), dtype=np.int8)
        for test in g.tests:
            if not test.p_value < local:
                break
            if test.split is not None:
                delta[test.split.item, self.variables.index(test.split.variable)] = 1
        return DetectionResult(delta.any(axis=1).astype(np.int8), delta)


def detection_from_growth(growth: GrowthResult, n_items: int,
                          variables: tuple[str, ...],
                          alpha: float | None = None) -> DetectionResult:
    """Detection at the growth's own alpha (default) or a re-traced smaller one."""
    if alpha is None or growth.per_item_stopping:
        if alpha is not None and abs(alpha - growth.alpha) > 1e-12:
            raise UsageError("per-item growth results cannot be re-traced at another alpha")
        delta = np.zeros((n_items, len(variables)), dtype=np.int8)
        for rec in growth.trail:
            delta[rec.item, variables.index(rec.variable)] = 1
        return DetectionResult(delta.any(axis=1).astype(np.int8), delta)
    return ScoredGrowth(growth, n_items, variables).at_alpha(alpha)


def roc_curve(pairs, alphas) -> list[tuple[float, float]]:
    """Average (FPR_I, TPR_I) over replications for each alpha in the grid.

    `pairs` is a list of (GroundTruth, scored) where scored exposes
    at_alpha(alpha) -> DetectionResult.  Per alpha, rates are averaged
    over the replications where they are defined.
    """
    points = []
    for alpha in alphas:
        fprs, tprs = [], []
        for truth, scored in pairs:
            m = compute_metrics(truth, scored.at_alpha(alpha))
            if m.fpr_item is not None:
                fprs.append(m.fpr_item)
            if m.tpr_item is not None:
                tprs.append(m.tpr_item)
        if not fprs or not tprs:
            raise UsageError("ROC needs both DIF and DIF-free items in the truth")
        points.append((float(np.mean(fprs)), float(np.mean(tprs))))
    return points


def roc_auc(points) -> float:
    """Trapezoidal area under an ROC point list.

    Points are sorted by FPR; the curve is anchored at (0, 0) and extended
    horizontally to FPR = 1 from its last point.
    """
    pts = sorted(points)
    xs = [0.0] + [p[0] for p in pts]
    ys = [0.0] + [p[1] for p in pts]
    if xs[-1] < 1.0:
        xs.append(1.0)
        ys.append(ys[-1])
    area = 0.0
    for i in range(1, len(xs)):
        area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1])
    return area
