"""Item focussed trees: per-item recursive partitions inside one logistic model.

Each item i keeps two partitions of covariate space: one carrying leaf
intercepts and one carrying leaf slopes on the test score,

    eta_pi = sum_l gamma_il I(x_p in R_il) + S_p * sum_q alpha_iq I(x_p in R_iq).

An item that is never split keeps both components constant, which is the
plain ``beta_0i + S_p beta_i`` model.  Growing proceeds greedily: among
all combinations of item, component, node, variable and threshold, the
split whose refitted model gains the largest likelihood-ratio statistic
over the item's current model is nominated.  Its (item, variable) pair is
then screened with a permutation test of the maximally selected statistic
T_j = max_c T_jc at local level alpha/m; a significant result commits the
split, a non-significant one stops the procedure (or retires the item when
per-item stopping is requested).

Strategies differ only in the admissible split components:

- ``udif``: intercept splits only, slope stays a single global beta_i
- ``dif``: intercept or slope splits, the two partitions grow independently
- ``nudif``: simultaneous splits, both components split at the same point
  and share one partition

All candidate refits are exact maximum-likelihood fits, evaluated in
batches; permutation streams are keyed by (iteration, item, variable,
replicate), which makes results independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .data import Dataset, VariableSpec
from .errors import IftreeError, RankDeficientError, UsageError
from .glm import fit_logistic_batch, fit_split_batch

COMPONENT_INTERCEPT = "intercept"
COMPONENT_SLOPE = "slope"
COMPONENT_SIMULTANEOUS = "simultaneous"

_STRATEGY_COMPONENTS = {
    "udif": (COMPONENT_INTERCEPT,),
    "dif": (COMPONENT_INTERCEPT, COMPONENT_SLOPE),
    "nudif": (COMPONENT_SIMULTANEOUS,),
}

_COMP_RANK = {COMPONENT_INTERCEPT: 0, COMPONENT_SLOPE: 1, COMPONENT_SIMULTANEOUS: 0}

_MAX_BATCH_ELEMS = 1_500_000


class VariableExhausted(IftreeError):
    """No admissible split point is left for the requested variable."""


# ---------------------------------------------------------------------------
# Regions and trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """One threshold condition; side 'le' keeps x <= threshold, 'gt' keeps x > threshold."""

    variable: str
    threshold: float
    side: str

    def __post_init__(self):
        if self.side not in ("le", "gt"):
            raise UsageError(f"branch side must be 'le' or 'gt', got {self.side!r}")

    def describe(self) -> str:
        op = "<=" if self.side == "le" else ">"
        return f"{self.variable} {op} {self.threshold:g}"


@dataclass(frozen=True)
class Region:
    """Intersection of branch conditions; the root region has none."""

    branches: tuple[Branch, ...] = ()

    def mask(self, values: np.ndarray, columns: tuple[str, ...]) -> np.ndarray:
        out = np.ones(values.shape[0], dtype=bool)
        for br in self.branches:
            col = values[:, columns.index(br.variable)]
            out &= (col <= br.threshold) if br.side == "le" else (col > br.threshold)
        return out

    def contains(self, row: np.ndarray, columns: tuple[str, ...]) -> bool:
        for br in self.branches:
            v = row[columns.index(br.variable)]
            ok = (v <= br.threshold) if br.side == "le" else (v > br.threshold)
            if not ok:
                return False
        return True

    def split(self, variable: str, threshold: float) -> tuple["Region", "Region"]:
        lo = Region(self.branches + (Branch(variable, threshold, "le"),))
        hi = Region(self.branches + (Branch(variable, threshold, "gt"),))
        return lo, hi

    def describe(self) -> str:
        return " & ".join(br.describe() for br in self.branches) if self.branches else "(root)"


@dataclass(frozen=True)
class SplitRecord:
    """One committed split together with its permutation-test evidence."""

    order: int
    iteration: int
    item: int
    component: str
    variable: str
    threshold: float
    parent: Region
    lr_statistic: float
    p_value: float
    permutations: int
    local_alpha: float
    n_left: int
    n_right: int


@dataclass(frozen=True)
class TestRecord:
    """One permutation test in the order it was carried out."""

    iteration: int
    item: int
    variable: str
    observed_t: float
    p_value: float
    permutations: int
    local_alpha: float
    accepted: bool
    split: SplitRecord | None


@dataclass(frozen=True)
class ItemTree:
    """Fitted pair of partitions for one item.

    Both components are stored as (region, coefficient) leaves; a constant
    component is a single root-region leaf.
    """

    item: int
    columns: tuple[str, ...]
    intercept_leaves: tuple[tuple[Region, float], ...]
    slope_leaves: tuple[tuple[Region, float], ...]
    split_trail: tuple[SplitRecord, ...] = ()

    @property
    def n_splits(self) -> int:
        return len(self.split_trail)

    @property
    def is_constant(self) -> bool:
        return len(self.intercept_leaves) == 1 and len(self.slope_leaves) == 1

    def dif_variables(self) -> tuple[str, ...]:
        seen: list[str] = []
        for rec in self.split_trail:
            if rec.variable not in seen:
                seen.append(rec.variable)
        return tuple(seen)


def predict_eta(tree: ItemTree, x, score: float) -> float:
    """Linear predictor of the tree model for one person.

    `x` is either a mapping of variable name to value or an array aligned
    with tree.columns.
    """
    if isinstance(x, dict):
        row = np.array([x[c] for c in tree.columns], dtype=np.float64)
    else:
        row = np.asarray(x, dtype=np.float64)
    gamma = _leaf_value(tree.intercept_leaves, row, tree.columns)
    alpha = _leaf_value(tree.slope_leaves, row, tree.columns)
    return float(gamma + score * alpha)


def _leaf_value(leaves, row, columns) -> float:
    for region, coef in leaves:
        if region.contains(row, columns):
            return coef
    raise IftreeError("no leaf region matched; the partition is not exhaustive")


@dataclass(frozen=True)
class SplitCandidate:
    """One admissible split; lr_statistic and candidate_fit are filled on evaluation."""

    item: int
    region: Region
    variable: str
    threshold: float
    component: str
    lr_statistic: float | None = None
    candidate_fit: np.ndarray | None = None


@dataclass(frozen=True)
class PermutationTestResult:
    observed_t: float
    permuted_t: np.ndarray
    p_value: float
    permutations: int
    local_alpha: float

    @property
    def significant(self) -> bool:
        return self.p_value < self.local_alpha


@dataclass
class GrowthResult:
    """Trees for every item plus the ordered trail of permutation tests."""

    trees: list[ItemTree]
    tests: list[TestRecord]
    strategy: str
    alpha: float
    local_alpha: float
    permutations: int
    min_node: int
    seed: int
    per_item_stopping: bool
    stop_reason: str

    @property
    def trail(self) -> list[SplitRecord]:
        return [t.split for t in self.tests if t.accepted and t.split is not None]


# ---------------------------------------------------------------------------
# Split-point enumeration
# ---------------------------------------------------------------------------


def enumerate_split_points(variable: VariableSpec, values, min_node: int = 30) -> list[float]:
    """Admissible thresholds for one variable within one node.

    `values` holds the variable restricted to the node's persons.
    Thresholds are midpoints between consecutive observed values (0.5 for
    a binary variable); any threshold whose children would fall below
    `min_node` persons is dropped.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        return []
    uniq, counts = np.unique(vals, return_counts=True)
    if uniq.size < 2:
        return []
    left = np.cumsum(counts)[:-1]
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    ok = (left >= min_node) & (vals.size - left >= min_node)
    return [float(t) for t in mids[ok]]


# ---------------------------------------------------------------------------
# Per-item model state and batched candidate evaluation
# ---------------------------------------------------------------------------


class _ItemState:
    """Current fitted model of one item: partitions, design, coefficients."""

    def __init__(self, item: int, y: np.ndarray, score: np.ndarray, data: Dataset):
        self.item = item
        self.y = y
        self.score = score
        self.n = y.shape[0]
        self.columns = data.covariates.names
        self.cov = data.covariates.values
        root = Region()
        all_true = np.ones(self.n, dtype=bool)
        self.int_regions: list[Region] = [root]
        self.int_masks: list[np.ndarray] = [all_true]
        self.int_creation: list[int] = [0]
        self.slope_regions: list[Region] = [root]
        self.slope_masks: list[np.ndarray] = [all_true]
        self.slope_creation: list[int] = [0]
        self._creation = 1
        self.beta: np.ndarray | None = None
        self.loglik = -np.inf
        self.X: np.ndarray | None = None
        self.active = True

    # design columns: intercept leaves first, then slope leaves
    def build_design(self) -> np.ndarray:
        cols = [m.astype(np.float64) for m in self.int_masks]
        cols += [m * self.score for m in self.slope_masks]
        return np.column_stack(cols)

    def column_names(self) -> tuple[str, ...]:
        if len(self.int_regions) == 1:
            names = ["(intercept)"]
        else:
            names = [f"g[{r.describe()}]" for r in self.int_regions]
        if len(self.slope_regions) == 1:
            names.append("score")
        else:
            names += [f"score:[{r.describe()}]" for r in self.slope_regions]
        return tuple(names)

    @property
    def n_int(self) -> int:
        return len(self.int_regions)

    def int_col(self, leaf: int) -> int:
        return leaf

    def slope_col(self, leaf: int) -> int:
        return self.n_int + leaf

    def refit(self, start: np.ndarray | None = None) -> None:
        self.X = self.build_design()
        res = fit_logistic_batch(self.X[None], self.y,
                                 start=None if start is None else start[None])
        if not res.ok[0]:
            # degenerate design (constant responses or collapsed score);
            # keep the item but stop offering it for splits
            self.beta = res.coefficients[0]
            self.loglik = float(res.log_likelihood[0])
            self.active = False
            return
        self.beta = res.coefficients[0]
        self.loglik = float(res.log_likelihood[0])

    def tree(self, trail: tuple[SplitRecord, ...] = ()) -> ItemTree:
        b = self.beta
        ints = tuple((r, float(b[self.int_col(i)])) for i, r in enumerate(self.int_regions))
        slopes = tuple((r, float(b[self.slope_col(i)])) for i, r in enumerate(self.slope_regions))
        return ItemTree(self.item, self.columns, ints, slopes, trail)


def _component_layout(state: _ItemState, component: str, leaf: int):
    """Replaced columns for one candidate family: list of (col, mask, mult).

    `mult` is None for indicator columns and the score vector for slope
    columns.  The first entry's mask is the node being split.
    """
    if component == COMPONENT_INTERCEPT:
        replaced = [(state.int_col(leaf), state.int_masks[leaf], None)]
    elif component == COMPONENT_SLOPE:
        replaced = [(state.slope_col(leaf), state.slope_masks[leaf], state.score)]
    elif component == COMPONENT_SIMULTANEOUS:
        replaced = [(state.int_col(leaf), state.int_masks[leaf], None),
                    (state.slope_col(leaf), state.slope_masks[leaf], state.score)]
    else:
        raise UsageError(f"unknown component {component!r}")
    return replaced


def _eval_candidates(state: _ItemState, component: str, leaf: int,
                     upper: np.ndarray, need_beta: bool = False):
    """Refit the item's model with one leaf split along each row of `upper`.

    `upper` is a (B, n) boolean array marking the persons above the
    candidate threshold.  Returns (loglik (B,), ok (B,), beta | None);
    candidates with an empty child are marked not ok and skipped.

    Coefficients are returned in the order the committed design would
    use (children inserted at the parent's position), so the winning
    candidate's fit can seed the post-commit refit unchanged.
    """
    replaced = _component_layout(state, component, leaf)
    node_mask = replaced[0][1]
    X0, beta0 = state.X, state.beta
    n, k0 = X0.shape
    repl_cols = [c for c, _, _ in replaced]
    keep = [c for c in range(k0) if c not in repl_cols]
    kb = len(keep)
    k = kb + 2 * len(repl_cols)

    base = X0[:, keep]
    pair_supports = [X0[:, c] for c in repl_cols]  # parent columns: mask (x score)
    start_base = beta0[keep]
    start_pairs = [(beta0[c], beta0[c]) for c in repl_cols]

    # canonical order inserts each child pair at its parent's position
    fitter_pos = {("base", c): pos for pos, c in enumerate(keep)}
    for pj, c in enumerate(repl_cols):
        fitter_pos[("child", c, False)] = kb + 2 * pj
        fitter_pos[("child", c, True)] = kb + 2 * pj + 1
    perm = []
    for c in range(k0):
        if c in repl_cols:
            perm += [fitter_pos[("child", c, False)], fitter_pos[("child", c, True)]]
        else:
            perm.append(fitter_pos[("base", c)])
    perm = np.asarray(perm)

    B = upper.shape[0]
    ll = np.full(B, -np.inf)
    ok = np.zeros(B, dtype=bool)
    betas = np.zeros((B, k)) if need_beta else None

    node_n = int(node_mask.sum())
    chunk = max(1, _MAX_BATCH_ELEMS // n)
    for s in range(0, B, chunk):
        ub = upper[s:s + chunk]
        cnt_hi = (ub & node_mask).sum(axis=1)
        valid = (cnt_hi > 0) & (cnt_hi < node_n)
        if not valid.any():
            continue
        idx = np.flatnonzero(valid)
        res = fit_split_batch(base, pair_supports, ub[idx], state.y,
                              start_base, start_pairs)
        good = res.ok
        ll[s + idx[good]] = res.log_likelihood[good]
        ok[s + idx[good]] = True
        if need_beta:
            betas[s + idx[good]] = res.coefficients[good][:, perm]
    return ll, ok, betas


@dataclass
class _Group:
    """All thresholds of one (component, leaf, variable) family."""

    component: str
    leaf: int
    creation: int
    var_idx: int
    thresholds: np.ndarray


def _groups_for_item(state: _ItemState, variables: tuple[VariableSpec, ...],
                     min_node: int, components: tuple[str, ...],
                     var_filter: int | None = None) -> list[_Group]:
    groups = []
    for comp in components:
        if comp == COMPONENT_INTERCEPT or comp == COMPONENT_SIMULTANEOUS:
            regions, masks, creations = state.int_regions, state.int_masks, state.int_creation
        else:
            regions, masks, creations = state.slope_regions, state.slope_masks, state.slope_creation
        for leaf, mask in enumerate(masks):
            for j, var in enumerate(variables):
                if var_filter is not None and j != var_filter:
                    continue
                thr = enumerate_split_points(var, state.cov[mask, j], min_node)
                if thr:
                    groups.append(_Group(comp, leaf, creations[leaf], j,
                                         np.asarray(thr, dtype=np.float64)))
    return groups


@dataclass
class _BestCandidate:
    lr: float
    item: int
    var_idx: int
    threshold: float
    component: str
    leaf: int
    creation: int
    beta: np.ndarray
    n_left: int
    n_right: int

    def sort_key(self):
        # prefer larger lr; break ties toward lower item, earlier variable,
        # smaller threshold, intercept before slope, earlier node
        return (self.lr, -self.item, -self.var_idx, -self.threshold,
                -_COMP_RANK[self.component], -self.creation)


def _better(a: _BestCandidate | None, b: _BestCandidate | None):
    if a is None:
        return b
    if b is None:
        return a
    return a if a.sort_key() >= b.sort_key() else b


def _sweep_item(state: _ItemState, variables, min_node, components) -> _BestCandidate | None:
    """Best candidate split of one item over all nodes, variables, thresholds."""
    if not state.active:
        return None
    best: _BestCandidate | None = None
    for g in _groups_for_item(state, variables, min_node, components):
        xcol = state.cov[:, g.var_idx]
        upper = xcol[None, :] > g.thresholds[:, None]
        ll, ok, betas = _eval_candidates(state, g.component, g.leaf, upper, need_beta=True)
        if not ok.any():
            continue
        lr = np.where(ok, 2.0 * (ll - state.loglik), -np.inf)
        np.maximum(lr, 0.0, out=lr, where=ok)
        t = int(np.argmax(lr))  # first max: smallest threshold wins ties
        node_mask = _component_layout(state, g.component, g.leaf)[0][1]
        n_hi = int((upper[t] & node_mask).sum())
        cand = _BestCandidate(float(lr[t]), state.item, g.var_idx,
                              float(g.thresholds[t]), g.component, g.leaf,
                              g.creation, betas[t], int(node_mask.sum()) - n_hi, n_hi)
        best = _better(best, cand)
    return best


def _max_stat_for_column(state: _ItemState, groups: list[_Group], xcol: np.ndarray,
                         batch_rows: int = 1) -> np.ndarray:
    """T = max over groups and thresholds of the split LR, for stacked columns.

    `xcol` has shape (R, n); one statistic per row is returned.  Candidates
    whose children die out under a permuted column are skipped; rows where
    every candidate dies yield 0.
    """
    xcol = np.atleast_2d(xcol)
    R, n = xcol.shape
    t_val = np.zeros(R)
    for g in groups:
        T = g.thresholds.shape[0]
        block = max(1, _MAX_BATCH_ELEMS // max(1, T * n))
        for s in range(0, R, block):
            xb = xcol[s:s + block]
            b = xb.shape[0]
            upper = xb[:, None, :] > g.thresholds[None, :, None]
            ll, ok, _ = _eval_candidates(state, g.component, g.leaf,
                                         upper.reshape(b * T, n))
            lr = np.where(ok, 2.0 * (ll - state.loglik), -np.inf)
            lr = np.maximum(lr, 0.0, where=ok, out=lr)
            lr = lr.reshape(b, T)
            np.maximum(t_val[s:s + b], lr.max(axis=1, initial=0.0), out=t_val[s:s + b])
    return t_val


# ---------------------------------------------------------------------------
# Permutation test
# ---------------------------------------------------------------------------


def _run_permutation_test(state: _ItemState, variables, var_idx: int, components,
                          min_node: int, observed_t: float, permutations: int,
                          seed: int, iteration: int, local_alpha: float,
                          ) -> PermutationTestResult:
    groups = _groups_for_item(state, variables, min_node, components, var_filter=var_idx)
    xcol = state.cov[:, var_idx]
    n = state.n
    R = permutations
    perms = np.empty((R, n))
    for r in range(R):
        g = rngmod.stream(seed, rngmod.PERMUTATION, iteration, state.item, var_idx, r)
        perms[r] = xcol[g.permutation(n)]
    permuted = _max_stat_for_column(state, groups, perms)
    p = (int(np.count_nonzero(permuted >= observed_t)) + 1) / (R + 1)
    return PermutationTestResult(observed_t, permuted, p, R, local_alpha)


# ---------------------------------------------------------------------------
# Growing
# ---------------------------------------------------------------------------


@dataclass
class _GrowSettings:
    strategy: str
    alpha: float
    permutations: int
    min_node: int
    seed: int
    per_item_stopping: bool


def _grow(data: Dataset, settings: _GrowSettings) -> GrowthResult:
    if not 0.0 < settings.alpha < 1.0:
        raise UsageError("alpha must be in (0, 1)")
    if settings.permutations < 1:
        raise UsageError("permutations must be >= 1")
    components = _STRATEGY_COMPONENTS[settings.strategy]
    variables = data.covariates.variables
    m = len(variables)
    local_alpha = settings.alpha / m

    states = []
    for item in range(data.n_items):
        st = _ItemState(item, data.responses.values[:, item].astype(np.float64),
                        data.score_for_item(item), data)
        st.refit()
        states.append(st)

    tests: list[TestRecord] = []
    trails: dict[int, list[SplitRecord]] = {i: [] for i in range(data.n_items)}
    best_by_item: dict[int, _BestCandidate | None] = {}
    dirty = set(range(data.n_items))
    stopped: set[int] = set()
    iteration = 1
    order = 0
    stop_reason = "exhausted"

    while True:
        for i in sorted(dirty):
            best_by_item[i] = _sweep_item(states[i], variables,
                                          settings.min_node, components)
        dirty.clear()

        best = None
        for i in range(data.n_items):
            if i in stopped:
                continue
            best = _better(best, best_by_item.get(i))
        if best is None:
            stop_reason = "exhausted"
            break

        state = states[best.item]
        perm = _run_permutation_test(
            state, variables, best.var_idx, components, settings.min_node,
            best.lr, settings.permutations, settings.seed, iteration, local_alpha)
        accepted = perm.p_value < local_alpha

        split = None
        if accepted:
            split = _commit(state, best, iteration, order, perm)
            trails[best.item].append(split)
            dirty.add(best.item)
            order += 1
        tests.append(TestRecord(
            iteration=iteration, item=best.item,
            variable=variables[best.var_idx].name,
            observed_t=best.lr, p_value=perm.p_value,
            permutations=perm.permutations, local_alpha=local_alpha,
            accepted=accepted, split=split))

        if accepted:
            iteration += 1
        elif settings.per_item_stopping:
            stopped.add(best.item)
            if len(stopped) == data.n_items:
                stop_reason = "nonsignificant"
                break
        else:
            stop_reason = "nonsignificant"
            break

    trees = [states[i].tree(tuple(trails[i])) for i in range(data.n_items)]
    return GrowthResult(trees=trees, tests=tests, strategy=settings.strategy,
                        alpha=settings.alpha, local_alpha=local_alpha,
                        permutations=settings.permutations, min_node=settings.min_node,
                        seed=settings.seed, per_item_stopping=settings.per_item_stopping,
                        stop_reason=stop_reason)


def _commit(state: _ItemState, best: _BestCandidate, iteration: int, order: int,
            perm: PermutationTestResult) -> SplitRecord:
    var = state.columns[best.var_idx]
    comp = best.component
    xcol = state.cov[:, best.var_idx]
    upper = xcol > best.threshold

    def split_lists(regions, masks, creations, leaf):
        parent_region = regions[leaf]
        parent_mask = masks[leaf]
        lo_r, hi_r = parent_region.split(var, best.threshold)
        lo_m = parent_mask & ~upper
        hi_m = parent_mask & upper
        regions[leaf:leaf + 1] = [lo_r, hi_r]
        masks[leaf:leaf + 1] = [lo_m, hi_m]
        creations[leaf:leaf + 1] = [state._creation, state._creation + 1]
        state._creation += 2
        return parent_region

    if comp == COMPONENT_INTERCEPT:
        parent = split_lists(state.int_regions, state.int_masks, state.int_creation, best.leaf)
    elif comp == COMPONENT_SLOPE:
        parent = split_lists(state.slope_regions, state.slope_masks,
                             state.slope_creation, best.leaf)
    else:
        parent = split_lists(state.int_regions, state.int_masks, state.int_creation, best.leaf)
        split_lists(state.slope_regions, state.slope_masks, state.slope_creation, best.leaf)

    # candidate columns were laid out in post-commit order, so the winning
    # coefficients seed the refit directly
    state.refit(start=best.beta)
    return SplitRecord(order=order, iteration=iteration, item=state.item,
                       component=comp, variable=var, threshold=best.threshold,
                       parent=parent, lr_statistic=best.lr, p_value=perm.p_value,
                       permutations=perm.permutations, local_alpha=perm.local_alpha,
                       n_left=best.n_left, n_right=best.n_right)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def grow_uniform(data: Dataset, alpha: float = 0.05, permutations: int = 1000,
                 min_node: int = 30, seed: int = 0,
                 per_item_stopping: bool = False) -> GrowthResult:
    """Grow intercept-split trees for uniform DIF."""
    return _grow(data, _GrowSettings("udif", alpha, permutations, min_node,
                                     seed, per_item_stopping))


def grow_dif(data: Dataset, alpha: float = 0.05, permutations: int = 1000,
             min_node: int = 30, seed: int = 0,
             per_item_stopping: bool = False) -> GrowthResult:
    """Grow trees with intercept and slope candidates (both DIF types)."""
    return _grow(data, _GrowSettings("dif", alpha, permutations, min_node,
                                     seed, per_item_stopping))


def grow_nudif(data: Dataset, alpha: float = 0.05, permutations: int = 1000,
               min_node: int = 30, seed: int = 0,
               per_item_stopping: bool = False) -> GrowthResult:
    """Grow trees with simultaneous intercept+slope splits (non-uniform DIF)."""
    return _grow(data, _GrowSettings("nudif", alpha, permutations, min_node,
                                     seed, per_item_stopping))


def _state_from_tree(data: Dataset, item: int, tree: ItemTree | None) -> _ItemState:
    state = _ItemState(item, data.responses.values[:, item].astype(np.float64),
                       data.score_for_item(item), data)
    if tree is not None:
        cov, cols = data.covariates.values, data.covariates.names
        state.int_regions = [r for r, _ in tree.intercept_leaves]
        state.int_masks = [r.mask(cov, cols) for r in state.int_regions]
        state.int_creation = list(range(len(state.int_regions)))
        state.slope_regions = [r for r, _ in tree.slope_leaves]
        state.slope_masks = [r.mask(cov, cols) for r in state.slope_regions]
        state.slope_creation = list(range(len(state.slope_regions)))
        state._creation = len(state.int_regions) + len(state.slope_regions)
    state.refit()
    return state


def evaluate_split(item: int, current: ItemTree | None, cand: SplitCandidate,
                   data: Dataset) -> float:
    """LR statistic of one candidate split against the item's current model."""
    state = _state_from_tree(data, item, current)
    if cand.component in (COMPONENT_INTERCEPT, COMPONENT_SIMULTANEOUS):
        regions = state.int_regions
    else:
        regions = state.slope_regions
    try:
        leaf = regions.index(cand.region)
    except ValueError:
        raise UsageError(f"candidate region {cand.region.describe()!r} is not a leaf "
                         f"of the current {cand.component} partition") from None
    xcol = data.covariates.values[:, data.covariates.names.index(cand.variable)]
    upper = (xcol > cand.threshold)[None, :]
    ll, ok, _ = _eval_candidates(state, cand.component, leaf, upper)
    if not ok[0]:
        raise RankDeficientError("candidate split yields a degenerate model")
    return max(0.0, 2.0 * (float(ll[0]) - state.loglik))


def maximally_selected_stat(item: int, variable: str, components, data: Dataset,
                            tree: ItemTree | None = None, region: Region | None = None,
                            min_node: int = 30) -> float:
    """T_j: maximum split LR over all admissible thresholds of one variable.

    The maximum runs over every terminal node (or only `region` when
    given) and over the supplied components.
    """
    if isinstance(components, str):
        components = (components,)
    state = _state_from_tree(data, item, tree)
    var_idx = data.covariates.names.index(variable)
    groups = _groups_for_item(state, data.covariates.variables, min_node,
                              tuple(components), var_filter=var_idx)
    if region is not None:
        keep = []
        for g in groups:
            regions = state.int_regions if g.component != COMPONENT_SLOPE else state.slope_regions
            if regions[g.leaf] == region:
                keep.append(g)
        groups = keep
    if not groups:
        raise VariableExhausted(f"no admissible split point for variable {variable!r}")
    xcol = data.covariates.values[:, var_idx]
    return float(_max_stat_for_column(state, groups, xcol[None, :])[0])


def permutation_test(item: int, variable: str, components, data: Dataset,
                     permutations: int, seed: int, tree: ItemTree | None = None,
                     min_node: int = 30, local_alpha: float = 0.05,
                     iteration: int = 1) -> PermutationTestResult:
    """Permutation test of the maximally selected statistic for (item, variable)."""
    if isinstance(components, str):
        components = (components,)
    observed = maximally_selected_stat(item, variable, components, data,
                                       tree=tree, min_node=min_node)
    state = _state_from_tree(data, item, tree)
    var_idx = data.covariates.names.index(variable)
    return _run_permutation_test(state, data.covariates.variables, var_idx,
                                 tuple(components), min_node, observed,
                                 permutations, seed, iteration, local_alpha)
