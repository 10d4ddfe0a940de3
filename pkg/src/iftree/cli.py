"""Command-line interface.

Subcommands: fit, simulate, evaluate, bench, render-tree.  Every flag can
also be given through a JSON (or, on Python 3.11+, TOML) config file via
--config; explicit flags win over the file.  Exit codes: 1 usage errors,
2 data errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .bench import DetectorConfig, run_benchmark, run_detector
from .data import Dataset, load_covariates, load_responses, save_covariates, save_responses
from .errors import DataError, NumericError, UsageError
from .metrics import DetectionResult, Metrics, compute_metrics, roc_auc
from .report import (
    build_report,
    detection_from_report,
    dump_report,
    load_report,
    render_tree,
    tree_from_json,
)
from .simulate import ScenarioSpec, run_scenario, truth_from_json, truth_to_json

_EXIT_USAGE, _EXIT_DATA, _EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    """Flags of the fit command; round-trips through the config file."""

    responses: str | None = None
    covariates: str | None = None
    schema: str | None = None
    method: str = "ift"
    strategy: str = "udif"
    alpha: float = 0.05
    permutations: int = 1000
    min_node: int = 30
    seed: int = 0
    threads: int | None = None
    out: str = "."
    rest_score: bool = False
    per_item_stopping: bool = False
    group_variable: str | None = None

    def validate(self):
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("alpha must be in (0, 1)")
        if self.permutations < 1:
            raise UsageError("permutations must be >= 1")
        if self.min_node < 1:
            raise UsageError("min-node must be >= 1")
        for key in ("responses", "covariates", "schema"):
            if getattr(self, key) is None:
                raise UsageError(f"--{key} is required")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _load_config_file(path: str) -> dict:
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            raise UsageError("TOML config files need Python 3.11+; use JSON") from None
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _merge_config(args: argparse.Namespace, keys) -> dict:
    merged: dict = {}
    if getattr(args, "config", None):
        doc = _load_config_file(args.config)
        unknown = set(doc) - set(keys)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(doc)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _add_fit_flags(p: _Parser):
    p.add_argument("--config", help="JSON/TOML file mirroring the flags")
    p.add_argument("--responses", help="response CSV (header = item names)")
    p.add_argument("--covariates", help="covariate CSV")
    p.add_argument("--schema", help="JSON sidecar declaring covariate scales")
    p.add_argument("--method", choices=("ift", "logistic-extended", "logistic-classical"))
    p.add_argument("--strategy", choices=("udif", "dif", "nudif"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--permutations", type=int)
    p.add_argument("--min-node", dest="min_node", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--rest-score", dest="rest_score", action="store_const", const=True)
    p.add_argument("--per-item-stopping", dest="per_item_stopping",
                   action="store_const", const=True)
    p.add_argument("--group-variable", dest="group_variable")


def _build_dataset(cfg: RunConfig) -> Dataset:
    responses = load_responses(cfg.responses)
    covariates = load_covariates(cfg.covariates, cfg.schema)
    return Dataset(responses, covariates, rest_score=cfg.rest_score)


def cmd_fit(args) -> int:
    keys = [f.name for f in fields(RunConfig)]
    cfg = RunConfig(**_merge_config(args, keys))
    cfg.validate()
    dataset = _build_dataset(cfg)
    det = DetectorConfig(method=cfg.method, strategy=cfg.strategy, alpha=cfg.alpha,
                         permutations=cfg.permutations, min_node=cfg.min_node,
                         group_variable=cfg.group_variable,
                         per_item_stopping=cfg.per_item_stopping)

    sim = _FitData(dataset, cfg.seed)
    outcome = run_detector(sim, det)

    doc = build_report(cfg.to_dict(), dataset.responses.item_names,
                       dataset.covariates.names,
                       growth=outcome.growth,
                       logistic=None if outcome.growth is not None else outcome.logistic)
    os.makedirs(cfg.out, exist_ok=True)
    report_path = os.path.join(cfg.out, "report.json")
    dump_report(doc, report_path)

    if outcome.growth is not None:
        tree_dir = os.path.join(cfg.out, "trees")
        os.makedirs(tree_dir, exist_ok=True)
        for tree, name in zip(outcome.growth.trees, dataset.responses.item_names):
            if tree.n_splits == 0:
                continue
            for fmt, ext in (("ascii", "txt"), ("json", "json"), ("dot", "dot")):
                path = os.path.join(tree_dir, f"{name}.{ext}")
                with open(path, "w") as fh:
                    fh.write(render_tree(tree, fmt, name=name))

    flagged = [e for e in doc["items"] if e["verdict"] != "none"]
    print(f"wrote {report_path}")
    print(f"{len(flagged)} of {dataset.n_items} items flagged "
          f"({cfg.method}, {cfg.strategy}, alpha={cfg.alpha})")
    for e in flagged:
        extra = f" via {', '.join(e['dif_variables'])}" if e.get("dif_variables") else ""
        print(f"  {e['name']}: {e['verdict']}{extra}")
    return 0


class _FitData:
    """Adapter giving run_detector the (dataset, seed, truth-less) view it expects."""

    def __init__(self, dataset: Dataset, seed: int):
        self.dataset = dataset
        self.seed = seed
        self.truth = None


def cmd_simulate(args) -> int:
    keys = ["persons", "items", "dif_kind", "dif_fraction", "strength",
            "covariate_design", "replications", "seed"]
    merged = _merge_config(args, keys)
    if args.scenario:
        doc = _load_config_file(args.scenario)
        doc.update(merged)
        merged = doc
    spec = ScenarioSpec.from_dict(merged)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    sims = run_scenario(spec)
    with open(os.path.join(out, "scenario.json"), "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    schema_path = os.path.join(out, "schema.json")
    for sim in sims:
        r = sim.replication
        save_responses(sim.dataset.responses, os.path.join(out, f"responses_{r}.csv"))
        save_covariates(sim.dataset.covariates, os.path.join(out, f"covariates_{r}.csv"),
                        schema_path=schema_path if r == 0 else None)
        with open(os.path.join(out, f"truth_{r}.json"), "w") as fh:
            json.dump(truth_to_json(sim.truth, sim.dataset.covariates.names), fh, indent=2)
            fh.write("\n")
    print(f"wrote {spec.replications} replication(s) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    with open(args.truth) as fh:
        truth, variables = truth_from_json(json.load(fh))
    doc = load_report(args.report)
    flags, delta = detection_from_report(doc, variables)
    detection = DetectionResult(flags, delta)
    m = compute_metrics(truth, detection)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    rows = {f: getattr(m, f) for f in Metrics.FIELDS}
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    path = os.path.join(out, "metrics.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(Metrics.FIELDS)
        w.writerow(["" if rows[f] is None else rows[f] for f in Metrics.FIELDS])
    print(f"wrote {path}")
    for f in Metrics.FIELDS:
        print(f"  {f} = {rows[f] if rows[f] is not None else 'undefined'}")
    return 0


def cmd_bench(args) -> int:
    keys = ["persons", "items", "dif_kind", "dif_fraction", "strength",
            "covariate_design", "replications", "seed"]
    merged = _merge_config(args, keys)
    if args.scenario:
        doc = _load_config_file(args.scenario)
        doc.update(merged)
        merged = doc
    spec = ScenarioSpec.from_dict(merged)

    methods = [m.strip() for m in (args.methods or "ift").split(",") if m.strip()]
    detectors = []
    for m in methods:
        detectors.append(DetectorConfig(
            method=m, strategy=args.strategy or "udif", alpha=args.alpha or 0.05,
            permutations=args.permutations or 200, min_node=args.min_node or 30,
            group_variable=args.group_variable,
            grow_alpha=args.roc_alpha if args.roc else None))

    result = run_benchmark(spec, detectors, workers=args.threads)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)

    per_rep_path = os.path.join(out, "metrics.csv")
    with open(per_rep_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "replication", *Metrics.FIELDS])
        for d, det in enumerate(detectors):
            for r, m in enumerate(result.metrics(d)):
                w.writerow([det.label, r] + ["" if getattr(m, f) is None else getattr(m, f)
                                             for f in Metrics.FIELDS])

    summary_path = os.path.join(out, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detector", "persons", "items", "dif_kind", "dif_fraction",
                    "strength", "replications",
                    *(f"mean_{f}" for f in Metrics.FIELDS)])
        for d, det in enumerate(detectors):
            agg = result.aggregate(d)
            w.writerow([det.label, spec.persons, spec.items, spec.dif_kind,
                        spec.dif_fraction, spec.strength, spec.replications]
                       + [agg.get(f, {}).get("mean", "") for f in Metrics.FIELDS])
            print(f"{det.label}: " + "  ".join(
                f"{f}={agg[f]['mean']:.4f}" for f in Metrics.FIELDS if f in agg))

    if args.roc:
        alphas = np.linspace(0.025, args.roc_alpha, 39)
        roc_path = os.path.join(out, "roc.csv")
        with open(roc_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detector", "alpha", "fpr_item", "tpr_item"])
            for d, det in enumerate(detectors):
                pts = result.roc(d, alphas)
                for a, (fpr, tpr) in zip(alphas, pts):
                    w.writerow([det.label, a, fpr, tpr])
                print(f"{det.label}: AUC = {roc_auc(pts):.4f}")
        print(f"wrote {roc_path}")
    print(f"wrote {summary_path}")
    return 0


def cmd_render_tree(args) -> int:
    doc = load_report(args.report)
    wanted = args.item
    for entry in doc["items"]:
        if str(entry["item"]) == wanted or entry["name"] == wanted:
            if "tree" not in entry:
                raise UsageError(f"item {wanted!r} has no tree (logistic report)")
            sys.stdout.write(render_tree(tree_from_json(entry["tree"]),
                                         args.format, name=entry["name"]))
            return 0
    raise UsageError(f"item {wanted!r} not found in report")


def make_parser() -> _Parser:
    p = _Parser(prog="iftree",
                description="DIF detection by item focussed trees and logistic baselines")
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a detector on observed data")
    _add_fit_flags(fit)
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="generate 2PL data with injected DIF")
    sim.add_argument("--scenario", help="scenario JSON/TOML file")
    sim.add_argument("--config", help=argparse.SUPPRESS)
    sim.add_argument("--persons", type=int)
    sim.add_argument("--items", type=int)
    sim.add_argument("--dif-kind", dest="dif_kind")
    sim.add_argument("--dif-fraction", dest="dif_fraction", type=float)
    sim.add_argument("--strength", type=float)
    sim.add_argument("--covariate-design", dest="covariate_design")
    sim.add_argument("--replications", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="score a report against ground truth")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--report", required=True)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    bench = sub.add_parser("bench", help="simulate, fit and evaluate a grid")
    bench.add_argument("--scenario")
    bench.add_argument("--config", help=argparse.SUPPRESS)
    bench.add_argument("--persons", type=int)
    bench.add_argument("--items", type=int)
    bench.add_argument("--dif-kind", dest="dif_kind")
    bench.add_argument("--dif-fraction", dest="dif_fraction", type=float)
    bench.add_argument("--strength", type=float)
    bench.add_argument("--covariate-design", dest="covariate_design")
    bench.add_argument("--replications", type=int)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--methods", help="comma-separated detector methods")
    bench.add_argument("--strategy", choices=("udif", "dif", "nudif"))
    bench.add_argument("--alpha", type=float)
    bench.add_argument("--permutations", type=int)
    bench.add_argument("--min-node", dest="min_node", type=int)
    bench.add_argument("--group-variable", dest="group_variable")
    bench.add_argument("--threads", type=int)
    bench.add_argument("--roc", action="store_true", help="also trace ROC curves")
    bench.add_argument("--roc-alpha", dest="roc_alpha", type=float, default=0.975)
    bench.add_argument("--out")
    bench.set_defaults(func=cmd_bench)

    rt = sub.add_parser("render-tree", help="print one item's tree from a report")
    rt.add_argument("--report", required=True)
    rt.add_argument("--item", required=True, help="item index or item name")
    rt.add_argument("--format", choices=("ascii", "json", "dot"), default="ascii")
    rt.set_defaults(func=cmd_render_tree)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return _EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
