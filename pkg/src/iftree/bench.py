"""Simulate -> fit -> evaluate pipelines over replicated scenarios.

Replications are farmed out to worker processes; every replication is
fully determined by the scenario seed and its index, so results are
identical for any worker count, and are always collected in replication
order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .errors import UsageError
from .logistic_dif import ItemModelSpec, run_classical_suite
from .metrics import (
    DetectionResult,
    Metrics,
    ScoredBaseline,
    ScoredGrowth,
    aggregate,
    compute_metrics,
    detection_from_growth,
    roc_auc,
    roc_curve,
)
from .simulate import ScenarioSpec, SimulatedDataset, generate_replication
from .trees import GrowthResult, grow_dif, grow_nudif, grow_uniform

METHODS = ("ift", "logistic-extended", "logistic-classical")

_GROWERS = {"udif": grow_uniform, "dif": grow_dif, "nudif": grow_nudif}


@dataclass(frozen=True)
class DetectorConfig:
    """One detector in a benchmark grid."""

    method: str
    strategy: str = "udif"
    alpha: float = 0.05
    permutations: int = 200
    min_node: int = 30
    group_variable: str | None = None
    grow_alpha: float | None = None   # grow at a larger level to allow ROC re-tracing
    per_item_stopping: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.method == "logistic-classical" and not self.group_variable:
            raise UsageError("logistic-classical needs a group_variable")
        if self.grow_alpha is not None and self.grow_alpha < self.alpha:
            raise UsageError("grow_alpha must be at least alpha")

    @property
    def label(self) -> str:
        return f"{self.method}:{self.strategy}"


@dataclass
class DetectorOutcome:
    """Result of one detector on one replication."""

    detection: DetectionResult
    metrics: Metrics | None     # None when no ground truth is available
    scored: object | None       # exposes at_alpha() when ROC tracing is possible
    growth: GrowthResult | None
    logistic: list | None = None


def grow_trees(dataset: Dataset, strategy: str, alpha: float, permutations: int,
               min_node: int, seed: int, per_item_stopping: bool = False) -> GrowthResult:
    try:
        grower = _GROWERS[strategy]
    except KeyError:
        raise UsageError(f"unknown strategy {strategy!r}") from None
    return grower(dataset, alpha=alpha, permutations=permutations,
                  min_node=min_node, seed=seed, per_item_stopping=per_item_stopping)


def run_detector(sim, cfg: DetectorConfig) -> DetectorOutcome:
    """Run one detector on one dataset-with-optional-truth (SimulatedDataset-like)."""
    dataset = sim.dataset
    variables = dataset.covariates.names

    def metrics_or_none(detection):
        return compute_metrics(sim.truth, detection) if sim.truth is not None else None

    if cfg.method == "ift":
        run_alpha = cfg.grow_alpha if cfg.grow_alpha is not None else cfg.alpha
        growth = grow_trees(dataset, cfg.strategy, run_alpha, cfg.permutations,
                            cfg.min_node, sim.seed, cfg.per_item_stopping)
        detection = detection_from_growth(
            growth, dataset.n_items, variables,
            alpha=None if run_alpha == cfg.alpha else cfg.alpha)
        scored = None
        if not cfg.per_item_stopping:
            scored = ScoredGrowth(growth, dataset.n_items, variables)
        return DetectorOutcome(detection, metrics_or_none(detection), scored, growth)

    mode = "classical_groups" if cfg.method == "logistic-classical" else "extended_vector"
    spec = ItemModelSpec(strategy=cfg.strategy, mode=mode,
                         group_variable=cfg.group_variable)
    results = run_classical_suite(dataset, spec, alpha=cfg.alpha)
    p_values = np.array([r.lr.p_value for r in results])
    scored = ScoredBaseline(p_values)
    detection = scored.at_alpha(cfg.alpha)
    return DetectorOutcome(detection, metrics_or_none(detection), scored, None,
                           logistic=results)


def _worker(args) -> list[DetectorOutcome]:
    spec_doc, rep, det_docs = args
    spec = ScenarioSpec(**spec_doc)
    sim = generate_replication(spec, rep)
    return [run_detector(sim, DetectorConfig(**d)) for d in det_docs]


@dataclass
class BenchResult:
    spec: ScenarioSpec
    detectors: list[DetectorConfig]
    outcomes: list[list[DetectorOutcome]]   # [detector][replication]
    truths: list

    def metrics(self, d: int) -> list[Metrics]:
        return [o.metrics for o in self.outcomes[d]]

    def aggregate(self, d: int) -> dict:
        return aggregate(self.metrics(d))

    def roc(self, d: int, alphas) -> list[tuple[float, float]]:
        pairs = [(t, o.scored) for t, o in zip(self.truths, self.outcomes[d])]
        if any(s is None for _, s in pairs):
            raise UsageError("detector does not expose alpha-indexed detections")
        return roc_curve(pairs, alphas)

    def auc(self, d: int, alphas) -> float:
        return roc_auc(self.roc(d, alphas))


def run_benchmark(spec: ScenarioSpec, detectors: list[DetectorConfig],
                  workers: int | None = None) -> BenchResult:
    """Run every detector on every replication of the scenario."""
    if workers is None:
        workers = min(os.cpu_count() or 1, spec.replications)
    det_docs = [asdict(d) for d in detectors]
    jobs = [(spec.to_dict(), r, det_docs) for r in range(spec.replications)]
    if workers > 1 and spec.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(_worker, jobs, chunksize=1))
    else:
        per_rep = [_worker(j) for j in jobs]
    truths = [generate_replication(spec, r).truth for r in range(spec.replications)]
    outcomes = [[per_rep[r][d] for r in range(spec.replications)]
                for d in range(len(detectors))]
    return BenchResult(spec, detectors, outcomes, truths)
