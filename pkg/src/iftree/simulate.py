"""2PL response generation with injected uniform / non-uniform DIF.

Responses follow the two-parameter logistic IRT model
P(Y=1) = expit(a_i (theta_p - b_i)) with theta_p ~ N(0,1), b_i ~ N(0,1)
and a_i ~ U(0,1).  DIF is injected by shifting difficulties (uniform) or
discriminations (non-uniform) through step functions of the covariates;
shifts are applied symmetrically, half the DIF items favouring each group.

Item parameters and response uniforms are drawn from one keyed stream and
covariates from another, so a scenario with all injection strengths zero
reproduces the pure 2PL data of `gen_2pl` bit for bit under the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .data import CovariateTable, Dataset, ResponseMatrix, VariableSpec
from .errors import UsageError
from .glm import expit

COVARIATE_DESIGNS = ("binary1", "ordinal1", "three_covariates")
DIF_KINDS = (
    "none",
    "uniform_binary",
    "uniform_ordinal",
    "uniform_first_variable",
    "uniform_complex",
    "nonuniform_binary",
    "nonuniform_mixed",
)

_KIND_DESIGN = {
    "uniform_binary": "binary1",
    "uniform_ordinal": "ordinal1",
    "uniform_first_variable": "three_covariates",
    "uniform_complex": "three_covariates",
    "nonuniform_binary": "binary1",
    "nonuniform_mixed": "three_covariates",
}


@dataclass(frozen=True)
class GroundTruth:
    """Which item/variable combinations truly carry DIF."""

    delta: np.ndarray            # (I, m) in {0, 1}
    dif_type: tuple[str, ...]    # per item: none | uniform | nonuniform

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=np.int8)
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "dif_type", tuple(self.dif_type))

    @property
    def item_has_dif(self) -> np.ndarray:
        return self.delta.any(axis=1)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting; replications derive their seeds from `seed`."""

    persons: int
    items: int
    dif_kind: str = "none"
    dif_fraction: float = 0.0
    strength: float = 0.0
    covariate_design: str | None = None
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dif_kind not in DIF_KINDS:
            raise UsageError(f"unknown dif_kind {self.dif_kind!r}")
        design = self.covariate_design
        if design is None:
            design = _KIND_DESIGN.get(self.dif_kind, "binary1")
            object.__setattr__(self, "covariate_design", design)
        if design not in COVARIATE_DESIGNS:
            raise UsageError(f"unknown covariate_design {design!r}")
        if self.dif_kind in _KIND_DESIGN and design != _KIND_DESIGN[self.dif_kind]:
            raise UsageError(
                f"dif_kind {self.dif_kind!r} requires covariate_design "
                f"{_KIND_DESIGN[self.dif_kind]!r}")
        if self.persons < 2 or self.items < 2:
            raise UsageError("need persons >= 2 and items >= 2")
        if not 0.0 <= self.dif_fraction < 1.0:
            raise UsageError("dif_fraction must be in [0, 1)")
        n = self.n_dif_items
        if self.dif_kind in ("uniform_binary", "uniform_ordinal",
                             "uniform_first_variable", "nonuniform_binary") and n % 2:
            raise UsageError(f"symmetric injection needs an even number of DIF items, got {n}")
        if self.dif_kind == "uniform_complex" and n != 2:
            raise UsageError(f"the two-covariate interaction scenario uses exactly 2 DIF "
                             f"items; dif_fraction * items gives {n}")
        if self.dif_kind == "nonuniform_mixed" and n != 4:
            raise UsageError(f"the mixed illustrative scenario uses exactly 4 DIF items; "
                             f"dif_fraction * items gives {n}")
        if self.dif_kind != "none" and n == 0:
            raise UsageError("dif_kind set but dif_fraction * items rounds to 0 items")

    @property
    def n_dif_items(self) -> int:
        return int(round(self.dif_fraction * self.items))

    @property
    def variables(self) -> tuple[VariableSpec, ...]:
        if self.covariate_design == "binary1":
            return (VariableSpec("x1", "binary"),)
        if self.covariate_design == "ordinal1":
            return (VariableSpec("x1", "ordinal"),)
        return (VariableSpec("x1", "binary"), VariableSpec("x2", "binary"),
                VariableSpec("x3", "continuous"))

    def to_dict(self) -> dict:
        return {
            "persons": self.persons, "items": self.items, "dif_kind": self.dif_kind,
            "dif_fraction": self.dif_fraction, "strength": self.strength,
            "covariate_design": self.covariate_design,
            "replications": self.replications, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise UsageError(f"unknown scenario keys: {sorted(extra)}")
        if "persons" not in doc or "items" not in doc:
            raise UsageError("scenario needs at least 'persons' and 'items'")
        return cls(**doc)


def _draw_irt(P: int, I: int, rng: np.random.Generator):
    theta = rng.standard_normal(P)
    b = rng.standard_normal(I)
    a = rng.random(I)
    return theta, b, a


def gen_2pl(P: int, I: int, seed: int):
    """Pure 2PL data without DIF; returns (responses, theta, a, b)."""
    rng = rngmod.stream(seed, rngmod.IRT)
    theta, b, a = _draw_irt(P, I, rng)
    u = rng.random((P, I))
    pi = expit(a[None, :] * (theta[:, None] - b[None, :]))
    values = (u < pi).astype(np.int8)
    names = tuple(f"i{j + 1}" for j in range(I))
    return ResponseMatrix(names, values), theta, a, b


def _halves(dif_items) -> tuple[list[int], list[int]]:
    items = sorted(int(i) for i in dif_items)
    h = len(items) // 2
    return items[:h], items[h:]


def inject_uniform_binary(b: np.ndarray, x: np.ndarray, c: float, dif_items) -> np.ndarray:
    """Per-person difficulties with a group shift on a binary covariate.

    The first half of the DIF items (by item index) becomes harder for
    x = 0, the second half for x = 1.
    """
    if len(dif_items) % 2:
        raise UsageError("symmetric injection needs an even number of DIF items")
    out = np.broadcast_to(np.asarray(b, dtype=np.float64), (x.shape[0], b.shape[0])).copy()
    first, second = _halves(dif_items)
    out[:, first] += c * (x == 0)[:, None]
    out[:, second] += c * (x == 1)[:, None]
    return out


def inject_uniform_ordinal(b: np.ndarray, x: np.ndarray, c: float, dif_items) -> np.ndarray:
    """Per-person difficulties shifted above/below the ordinal midpoint (x > 3)."""
    if len(dif_items) % 2:
        raise UsageError("symmetric injection needs an even number of DIF items")
    out = np.broadcast_to(np.asarray(b, dtype=np.float64), (x.shape[0], b.shape[0])).copy()
    first, second = _halves(dif_items)
    out[:, first] += c * (x > 3)[:, None]
    out[:, second] += c * (x <= 3)[:, None]
    return out


def inject_uniform_complex(b_item: float, x_first: np.ndarray, x3: np.ndarray,
                           c: float) -> np.ndarray:
    """Per-person difficulty for one item with interacting step functions.

    Difficulty rises by c for x3 > 0 and by another c for the subgroup
    with x3 > 0 and x_first = 0.
    """
    upper = x3 > 0
    return b_item + c * upper + c * (upper & (x_first == 0))


def inject_nonuniform(a: np.ndarray, x: np.ndarray, shift: float, dif_items) -> np.ndarray:
    """Per-person discriminations with a group shift on a binary covariate."""
    if len(dif_items) % 2:
        raise UsageError("symmetric injection needs an even number of DIF items")
    out = np.broadcast_to(np.asarray(a, dtype=np.float64), (x.shape[0], a.shape[0])).copy()
    first, second = _halves(dif_items)
    out[:, first] += shift * (x == 0)[:, None]
    out[:, second] += shift * (x == 1)[:, None]
    return out


def _draw_covariates(spec: ScenarioSpec, rng: np.random.Generator) -> CovariateTable:
    P = spec.persons
    if spec.covariate_design == "binary1":
        cols = [(rng.random(P) < 0.5).astype(np.float64)]
    elif spec.covariate_design == "ordinal1":
        cols = [rng.integers(1, 7, P).astype(np.float64)]
    else:
        x1 = (rng.random(P) < 0.5).astype(np.float64)
        x2 = (rng.random(P) < 0.5).astype(np.float64)
        x3 = rng.standard_normal(P)
        cols = [x1, x2, x3]
    return CovariateTable(spec.variables, np.column_stack(cols))


def _apply_injection(spec: ScenarioSpec, cov: CovariateTable, b: np.ndarray,
                     a: np.ndarray) -> tuple[np.ndarray, np.ndarray, GroundTruth]:
    """Returns per-person (P, I) difficulty and discrimination matrices plus truth."""
    P, I, m = spec.persons, spec.items, cov.n_variables
    delta = np.zeros((I, m), dtype=np.int8)
    dif_type = ["none"] * I
    B = np.broadcast_to(b, (P, I)).copy()
    A = np.broadcast_to(a, (P, I)).copy()
    kind = spec.dif_kind
    dif_items = list(range(spec.n_dif_items))

    if kind == "none" or not dif_items:
        return B, A, GroundTruth(delta, tuple(dif_type))

    if kind in ("uniform_binary", "uniform_ordinal", "uniform_first_variable"):
        x = cov.values[:, 0]
        inject = inject_uniform_ordinal if kind == "uniform_ordinal" else inject_uniform_binary
        B = inject(b, x, spec.strength, dif_items)
        for i in dif_items:
            delta[i, 0] = 1
            dif_type[i] = "uniform"
    elif kind == "uniform_complex":
        x1, x2, x3 = cov.values[:, 0], cov.values[:, 1], cov.values[:, 2]
        B[:, 0] = inject_uniform_complex(b[0], x1, x3, spec.strength)
        B[:, 1] = inject_uniform_complex(b[1], x2, x3, spec.strength)
        delta[0, 0] = delta[0, 2] = 1
        delta[1, 1] = delta[1, 2] = 1
        dif_type[0] = dif_type[1] = "uniform"
    elif kind == "nonuniform_binary":
        x = cov.values[:, 0]
        A = inject_nonuniform(a, x, spec.strength, dif_items)
        for i in dif_items:
            delta[i, 0] = 1
            dif_type[i] = "nonuniform"
    elif kind == "nonuniform_mixed":
        x1, x2 = cov.values[:, 0], cov.values[:, 1]
        A[:, 0] = a[0] + spec.strength * (x1 == 1)
        A[:, 1] = a[1] + spec.strength * (x2 == 0)
        B[:, 2] = b[2] + 0.8 * (x1 == 1)
        B[:, 3] = b[3] + 0.8 * (x2 == 0)
        delta[0, 0] = delta[2, 0] = 1
        delta[1, 1] = delta[3, 1] = 1
        dif_type[0] = dif_type[1] = "nonuniform"
        dif_type[2] = dif_type[3] = "uniform"
    return B, A, GroundTruth(delta, tuple(dif_type))


@dataclass(frozen=True)
class SimulatedDataset:
    """One replication: the observable data plus its generating truth."""

    dataset: Dataset
    truth: GroundTruth
    replication: int
    seed: int
    theta: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def generate_replication(spec: ScenarioSpec, replication: int = 0) -> SimulatedDataset:
    rep_seed = rngmod.derive_seed(spec.seed, replication)
    irt_rng = rngmod.stream(rep_seed, rngmod.IRT)
    cov_rng = rngmod.stream(rep_seed, rngmod.COVARIATES)
    P, I = spec.persons, spec.items
    theta, b, a = _draw_irt(P, I, irt_rng)
    u = irt_rng.random((P, I))
    cov = _draw_covariates(spec, cov_rng)
    B, A, truth = _apply_injection(spec, cov, b, a)
    pi = expit(A * (theta[:, None] - B))
    values = (u < pi).astype(np.int8)
    names = tuple(f"i{j + 1}" for j in range(I))
    dataset = Dataset(ResponseMatrix(names, values), cov)
    return SimulatedDataset(dataset, truth, replication, rep_seed, theta)


def run_scenario(spec: ScenarioSpec) -> list[SimulatedDataset]:
    """All replications of a scenario, deterministically keyed by (seed, r)."""
    return [generate_replication(spec, r) for r in range(spec.replications)]


def truth_to_json(truth: GroundTruth, variables: tuple[str, ...]) -> dict:
    return {"variables": list(variables),
            "delta": truth.delta.tolist(),
            "dif_type": list(truth.dif_type)}


def truth_from_json(doc: dict) -> tuple[GroundTruth, tuple[str, ...]]:
    truth = GroundTruth(np.asarray(doc["delta"], dtype=np.int8),
                        tuple(doc["dif_type"]))
    return truth, tuple(doc["variables"])
