"""DIF reports: a versioned JSON schema plus ASCII / JSON / DOT tree rendering.

Reports serialize every item's verdict, fitted trees (for the tree method)
or test results (for the logistic baselines) and the ordered test trail.
Floats round-trip exactly through JSON, so a reloaded report reproduces
linear predictors bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UsageError
from .logistic_dif import ItemTestResult
from .trees import Branch, GrowthResult, ItemTree, Region, SplitRecord

SCHEMA_VERSION = 1

VERDICT_NONE = "none"
VERDICT_UNIFORM = "uniform"
VERDICT_NONUNIFORM = "non-uniform"
VERDICT_UNDETERMINED = "dif-type-undetermined"


def _region_to_json(region: Region) -> list:
    return [[b.variable, b.side, b.threshold] for b in region.branches]


def _region_from_json(doc) -> Region:
    return Region(tuple(Branch(v, float(thr), side) for v, side, thr in doc))


def _split_to_json(rec: SplitRecord) -> dict:
    return {
        "order": rec.order, "iteration": rec.iteration, "item": rec.item,
        "component": rec.component, "variable": rec.variable,
        "threshold": rec.threshold, "parent": _region_to_json(rec.parent),
        "lr": rec.lr_statistic, "p_value": rec.p_value,
        "permutations": rec.permutations, "local_alpha": rec.local_alpha,
        "n_left": rec.n_left, "n_right": rec.n_right,
    }


def _split_from_json(doc) -> SplitRecord:
    return SplitRecord(
        order=doc["order"], iteration=doc["iteration"], item=doc["item"],
        component=doc["component"], variable=doc["variable"],
        threshold=float(doc["threshold"]), parent=_region_from_json(doc["parent"]),
        lr_statistic=float(doc["lr"]), p_value=float(doc["p_value"]),
        permutations=doc["permutations"], local_alpha=float(doc["local_alpha"]),
        n_left=doc["n_left"], n_right=doc["n_right"],
    )


def tree_to_json(tree: ItemTree) -> dict:
    return {
        "item": tree.item,
        "columns": list(tree.columns),
        "intercept": [{"region": _region_to_json(r), "coef": c}
                      for r, c in tree.intercept_leaves],
        "slope": [{"region": _region_to_json(r), "coef": c}
                  for r, c in tree.slope_leaves],
        "trail": [_split_to_json(rec) for rec in tree.split_trail],
    }


def tree_from_json(doc) -> ItemTree:
    return ItemTree(
        item=doc["item"],
        columns=tuple(doc["columns"]),
        intercept_leaves=tuple((_region_from_json(e["region"]), float(e["coef"]))
                               for e in doc["intercept"]),
        slope_leaves=tuple((_region_from_json(e["region"]), float(e["coef"]))
                           for e in doc["slope"]),
        split_trail=tuple(_split_from_json(e) for e in doc["trail"]),
    )


def tree_verdict(tree: ItemTree, strategy: str) -> str:
    if tree.n_splits == 0:
        return VERDICT_NONE
    if strategy == "udif":
        return VERDICT_UNIFORM
    if strategy == "nudif":
        return VERDICT_NONUNIFORM
    any_slope = any(rec.component in ("slope", "simultaneous") for rec in tree.split_trail)
    return VERDICT_NONUNIFORM if any_slope else VERDICT_UNIFORM


def logistic_verdict(flagged: bool, strategy: str) -> str:
    if not flagged:
        return VERDICT_NONE
    return {"udif": VERDICT_UNIFORM, "dif": VERDICT_UNDETERMINED,
            "nudif": VERDICT_NONUNIFORM}[strategy]


def build_report(config: dict, item_names, variables,
                 growth: GrowthResult | None = None,
                 logistic: list[ItemTestResult] | None = None) -> dict:
    """Assemble the report document for either detector family."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "iftree", "version": _version()},
        "config": dict(sorted(config.items())),
        "variables": list(variables),
        "items": [],
    }
    if (growth is None) == (logistic is None):
        raise UsageError("exactly one of growth/logistic results is required")

    if growth is not None:
        doc["stop_reason"] = growth.stop_reason
        doc["local_alpha"] = growth.local_alpha
        doc["tests"] = [{
            "iteration": t.iteration, "item": t.item, "variable": t.variable,
            "observed_t": t.observed_t, "p_value": t.p_value,
            "permutations": t.permutations, "local_alpha": t.local_alpha,
            "accepted": t.accepted,
        } for t in growth.tests]
        for tree, name in zip(growth.trees, item_names):
            doc["items"].append({
                "item": tree.item,
                "name": name,
                "verdict": tree_verdict(tree, growth.strategy),
                "dif_variables": list(tree.dif_variables()),
                "tree": tree_to_json(tree),
            })
    else:
        for res in logistic:
            doc["items"].append({
                "item": res.item,
                "name": item_names[res.item],
                "verdict": logistic_verdict(res.flagged, res.strategy),
                "flagged": res.flagged,
                "lr": res.lr.statistic,
                "df": res.lr.df,
                "p_value": res.lr.p_value,
                "coefficients": {n: float(v) for n, v in
                                 zip(res.parameter_names, res.parameters)},
            })
    return doc


def _version() -> str:
    from . import __version__
    return __version__


def dump_report(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    return doc


def detection_from_report(doc: dict, variables: tuple[str, ...]):
    """(item_flags, delta_hat | None) recovered from a report document."""
    items = sorted(doc["items"], key=lambda e: e["item"])
    flags = np.array([e["verdict"] != VERDICT_NONE for e in items], dtype=np.int8)
    if all("tree" in e for e in items):
        delta = np.zeros((len(items), len(variables)), dtype=np.int8)
        for e in items:
            for v in e.get("dif_variables", []):
                delta[e["item"], variables.index(v)] = 1
        return flags, delta
    return flags, None


# ---------------------------------------------------------------------------
# Tree rendering
# ---------------------------------------------------------------------------


@dataclass
class _Node:
    region: Region
    variable: str | None = None
    threshold: float | None = None
    lower: "_Node | None" = None
    upper: "_Node | None" = None
    coef: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.variable is None


def _build_hierarchy(tree: ItemTree, component: str) -> _Node:
    """Replay the split trail to recover the binary tree of one component."""
    wanted = {"intercept": ("intercept", "simultaneous"),
              "slope": ("slope", "simultaneous")}[component]
    root = _Node(Region())
    leaves = {(): root}
    for rec in tree.split_trail:
        if rec.component not in wanted:
            continue
        key = rec.parent.branches
        node = leaves.pop(key, None)
        if node is None:
            raise DataError(f"split trail is inconsistent: {rec.parent.describe()!r} "
                            f"is not a current leaf")
        node.variable, node.threshold = rec.variable, rec.threshold
        lo_r, hi_r = node.region.split(rec.variable, rec.threshold)
        node.lower, node.upper = _Node(lo_r), _Node(hi_r)
        leaves[lo_r.branches] = node.lower
        leaves[hi_r.branches] = node.upper
    pairs = tree.intercept_leaves if component == "intercept" else tree.slope_leaves
    coefs = {r.branches: c for r, c in pairs}
    for key, node in leaves.items():
        if key not in coefs:
            raise DataError("split trail and leaves disagree")
        node.coef = coefs[key]
    return root


def _ascii_component(node: _Node, symbol: str, depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    if node.is_leaf:
        lines.append(f"{pad}-> {symbol} = {node.coef:.4g}")
        return
    for side, child in (("<=", node.lower), (">", node.upper)):
        lines.append(f"{pad}{node.variable} {side} {node.threshold:g}")
        _ascii_component(child, symbol, depth + 1, lines)


def render_tree(tree: ItemTree, fmt: str = "ascii", name: str | None = None) -> str:
    """Render one item's pair of trees as ascii, json or graphviz dot."""
    title = name if name is not None else f"item {tree.item + 1}"
    if fmt == "json":
        return json.dumps(tree_to_json(tree), indent=2, sort_keys=True)
    if fmt == "ascii":
        lines = [title]
        for comp, symbol, pairs in (("intercept", "gamma", tree.intercept_leaves),
                                    ("slope", "alpha", tree.slope_leaves)):
            if len(pairs) == 1:
                label = "beta0" if comp == "intercept" else "beta"
                lines.append(f"  {comp}: constant {label} = {pairs[0][1]:.4g}")
                continue
            lines.append(f"  {comp}:")
            _ascii_component(_build_hierarchy(tree, comp), symbol, 2, lines)
        return "\n".join(lines) + "\n"
    if fmt == "dot":
        return _render_dot(tree, title)
    raise UsageError(f"unknown tree format {fmt!r}, expected ascii, json or dot")


def _render_dot(tree: ItemTree, title: str) -> str:
    lines = [f'digraph "{title}" {{', '  node [shape=box];']
    counter = [0]

    def emit(node: _Node, prefix: str, symbol: str) -> str:
        nid = f"{prefix}{counter[0]}"
        counter[0] += 1
        if node.is_leaf:
            lines.append(f'  {nid} [label="{symbol} = {node.coef:.4g}", shape=ellipse];')
            return nid
        lines.append(f'  {nid} [label="{node.variable} <= {node.threshold:g}"];')
        lo = emit(node.lower, prefix, symbol)
        hi = emit(node.upper, prefix, symbol)
        lines.append(f'  {nid} -> {lo} [label="yes"];')
        lines.append(f'  {nid} -> {hi} [label="no"];')
        return nid

    for comp, symbol in (("intercept", "gamma"), ("slope", "alpha")):
        pairs = tree.intercept_leaves if comp == "intercept" else tree.slope_leaves
        lines.append(f'  subgraph "cluster_{comp}" {{')
        lines.append(f'    label="{comp}";')
        start = len(lines)
        if len(pairs) == 1:
            nid = f"{comp[0]}{counter[0]}"
            counter[0] += 1
            label = "beta0" if comp == "intercept" else "beta"
            lines.append(f'  {nid} [label="{label} = {pairs[0][1]:.4g}", shape=ellipse];')
        else:
            emit(_build_hierarchy(tree, comp), comp[0], symbol)
        for i in range(start, len(lines)):
            lines[i] = "  " + lines[i]
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
