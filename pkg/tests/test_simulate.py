import numpy as np
import pytest

from iftree.errors import UsageError
from iftree.glm import expit
from iftree.simulate import (
    ScenarioSpec,
    gen_2pl,
    generate_replication,
    inject_nonuniform,
    inject_uniform_binary,
    inject_uniform_complex,
    inject_uniform_ordinal,
    run_scenario,
    truth_from_json,
    truth_to_json,
)


class TestGen2pl:
    def test_zero_discrimination_gives_half(self):
        # with a = 0 every response probability is exactly 0.5
        assert expit(0.0 * (1.7 - 0.3)) == 0.5
        r, theta, a, b = gen_2pl(2000, 4, seed=5)
        pi = expit(0.0 * (theta[:, None] - b[None, :]))
        assert np.all(pi == 0.5)

    def test_empirical_mean_matches_closed_form(self):
        # fixed theta=0, a=1, b=0 has solve probability exactly 0.5
        rng_n = 100_000
        r, theta, a, b = gen_2pl(rng_n, 2, seed=77)
        # re-simulate with pinned parameters but the same uniform draws
        from iftree import rng as rngmod
        g = rngmod.stream(77, rngmod.IRT)
        g.standard_normal(rng_n)  # theta draws
        g.standard_normal(2)      # b draws
        g.random(2)               # a draws
        u = g.random((rng_n, 2))
        y = (u < 0.5).astype(float)
        assert abs(y.mean() - 0.5) < 0.01

    def test_seeded_reproducibility(self):
        r1, *_ = gen_2pl(50, 5, seed=123)
        r2, *_ = gen_2pl(50, 5, seed=123)
        assert np.array_equal(r1.values, r2.values)
        r3, *_ = gen_2pl(50, 5, seed=124)
        assert not np.array_equal(r1.values, r3.values)


class TestInjections:
    def test_zero_strength_equals_pure_2pl(self):
        spec = ScenarioSpec(persons=60, items=10, dif_kind="uniform_binary",
                            dif_fraction=0.2, strength=0.0, seed=42)
        sim = generate_replication(spec, 3)
        pure, *_ = gen_2pl(60, 10, seed=sim.seed)
        assert np.array_equal(sim.dataset.responses.values, pure.values)

    def test_binary_direction(self):
        # favoured group must empirically solve more often
        P = 10_000
        rng = np.random.default_rng(0)
        x = (rng.random(P) < 0.5).astype(float)
        b = np.zeros(4)
        B = inject_uniform_binary(b, x, 1.6, [0, 1, 2, 3])
        # first half of DIF items get +c at x=0 (harder there)
        assert np.all(B[x == 0][:, 0] == 1.6)
        assert np.all(B[x == 1][:, 0] == 0.0)
        assert np.all(B[x == 1][:, 2] == 1.6)
        theta = rng.standard_normal(P)
        pi = expit(0.8 * (theta[:, None] - B))
        y = (rng.random((P, 4)) < pi)
        assert y[x == 1, 0].mean() > y[x == 0, 0].mean()
        assert y[x == 0, 2].mean() > y[x == 1, 2].mean()

    def test_binary_requires_even_count(self):
        with pytest.raises(UsageError):
            inject_uniform_binary(np.zeros(3), np.zeros(4), 0.8, [0, 1, 2])

    def test_ordinal_threshold(self):
        x = np.array([1, 2, 3, 4, 5, 6], dtype=float)
        B = inject_uniform_ordinal(np.zeros(2), x, 0.8, [0, 1])
        assert B[:, 0].tolist() == [0, 0, 0, 0.8, 0.8, 0.8]
        assert B[:, 1].tolist() == [0.8, 0.8, 0.8, 0, 0, 0]

    def test_complex_step_functions(self):
        x1 = np.array([0.0, 1.0, 0.0, 1.0])
        x3 = np.array([-0.5, -0.1, 0.4, 0.8])
        out = inject_uniform_complex(0.25, x1, x3, 0.8)
        assert out.tolist() == [0.25, 0.25, 0.25 + 1.6, 0.25 + 0.8]

    def test_complex_three_groups_ordered(self):
        P = 10_000
        rng = np.random.default_rng(3)
        x1 = (rng.random(P) < 0.5).astype(float)
        x3 = rng.standard_normal(P)
        diff = inject_uniform_complex(0.0, x1, x3, 0.8)
        theta = rng.standard_normal(P)
        y = rng.random(P) < expit(0.7 * (theta - diff))
        easy = y[x3 <= 0].mean()
        mid = y[(x3 > 0) & (x1 == 1)].mean()
        hard = y[(x3 > 0) & (x1 == 0)].mean()
        assert easy > mid > hard

    def test_nonuniform_identity_and_rule(self):
        x = np.array([0.0, 1.0])
        a = np.array([0.3, 0.9])
        assert np.array_equal(inject_nonuniform(a, x, 0.0, [0, 1]),
                              np.broadcast_to(a, (2, 2)))
        A = inject_nonuniform(a, x, 0.6, [0, 1])
        assert A[0, 0] == pytest.approx(0.9)   # x=0 on first-half item
        assert A[1, 0] == pytest.approx(0.3)
        assert A[1, 1] == pytest.approx(1.5)   # x=1 on second-half item

    def test_nonuniform_curves_cross_at_difficulty(self):
        # same location, different steepness: curves meet exactly at theta = b
        b = 0.4
        assert expit(0.5 * (b - b)) == expit(1.1 * (b - b)) == 0.5
        thetas = np.linspace(-3, 3, 601)
        p_lo = expit(0.5 * (thetas - b))
        p_hi = expit(1.1 * (thetas - b))
        left = thetas < b - 1e-9
        right = thetas > b + 1e-9
        assert np.all(p_lo[left] > p_hi[left])
        assert np.all(p_lo[right] < p_hi[right])

    def test_mixed_scenario_rules(self):
        spec = ScenarioSpec(persons=500, items=20, dif_kind="nonuniform_mixed",
                            dif_fraction=0.2, strength=0.6, seed=8)
        sim = generate_replication(spec, 0)
        t = sim.truth
        assert t.dif_type[:4] == ("nonuniform", "nonuniform", "uniform", "uniform")
        assert t.delta[0].tolist() == [1, 0, 0]
        assert t.delta[1].tolist() == [0, 1, 0]
        assert t.delta[2].tolist() == [1, 0, 0]
        assert t.delta[3].tolist() == [0, 1, 0]


class TestRunScenario:
    def test_single_replication(self):
        spec = ScenarioSpec(persons=50, items=5, seed=1)
        sims = run_scenario(spec)
        assert len(sims) == 1

    def test_rerun_identical(self):
        spec = ScenarioSpec(persons=50, items=5, dif_kind="uniform_binary",
                            dif_fraction=0.4, strength=0.8, replications=3, seed=6)
        a = run_scenario(spec)
        b = run_scenario(spec)
        for s1, s2 in zip(a, b):
            assert np.array_equal(s1.dataset.responses.values, s2.dataset.responses.values)
            assert np.array_equal(s1.dataset.covariates.values, s2.dataset.covariates.values)

    def test_dif_count(self):
        spec = ScenarioSpec(persons=50, items=20, dif_kind="uniform_binary",
                            dif_fraction=0.10, strength=1.6, seed=2)
        sim = generate_replication(spec, 0)
        assert int(sim.truth.item_has_dif.sum()) == 2
        assert np.array_equal(np.flatnonzero(sim.truth.item_has_dif), [0, 1])

    def test_truth_rows_match_injection(self):
        spec = ScenarioSpec(persons=50, items=10, dif_kind="uniform_binary",
                            dif_fraction=0.2, strength=0.8, seed=2)
        sim = generate_replication(spec, 0)
        assert sim.truth.delta.sum() == 2
        assert sim.truth.dif_type.count("uniform") == 2

    def test_covariate_marginals(self):
        spec = ScenarioSpec(persons=40_000, items=2, covariate_design="three_covariates",
                            seed=3)
        sim = generate_replication(spec, 0)
        x = sim.dataset.covariates.values
        assert abs(x[:, 0].mean() - 0.5) < 0.01
        assert abs(x[:, 1].mean() - 0.5) < 0.01
        assert abs(x[:, 2].mean()) < 0.02
        assert abs(x[:, 2].std() - 1.0) < 0.02

    def test_ordinal_marginals(self):
        spec = ScenarioSpec(persons=30_000, items=2, covariate_design="ordinal1", seed=3)
        sim = generate_replication(spec, 0)
        x = sim.dataset.covariates.values[:, 0]
        counts = np.bincount(x.astype(int), minlength=7)[1:]
        assert np.all(np.abs(counts / x.size - 1 / 6) < 0.01)

    def test_spec_validation(self):
        with pytest.raises(UsageError):
            ScenarioSpec(persons=50, items=20, dif_kind="uniform_binary",
                         dif_fraction=0.15, strength=0.8)  # 3 items, odd
        with pytest.raises(UsageError):
            ScenarioSpec(persons=50, items=40, dif_kind="uniform_complex",
                         dif_fraction=0.2, strength=0.8)  # needs exactly 2
        with pytest.raises(UsageError):
            ScenarioSpec(persons=50, items=20, dif_kind="uniform_binary",
                         dif_fraction=0.1, strength=0.8, covariate_design="ordinal1")

    def test_truth_json_roundtrip(self):
        spec = ScenarioSpec(persons=50, items=10, dif_kind="uniform_binary",
                            dif_fraction=0.2, strength=0.8, seed=2)
        sim = generate_replication(spec, 0)
        doc = truth_to_json(sim.truth, sim.dataset.covariates.names)
        truth, variables = truth_from_json(doc)
        assert variables == ("x1",)
        assert np.array_equal(truth.delta, sim.truth.delta)
        assert truth.dif_type == sim.truth.dif_type
