import numpy as np
import pytest

from iftree.data import CovariateTable, Dataset, ResponseMatrix, VariableSpec
from iftree.errors import RankDeficientError
from iftree.glm import expit
from iftree.logistic_dif import (
    ItemModelSpec,
    fit_classical_groups,
    fit_dif_extended,
    fit_nudif_extended,
    fit_udif_extended,
    run_classical_suite,
)
from iftree.simulate import ScenarioSpec, generate_replication


def make_dataset(values, cov_cols, scales=None):
    P, I = values.shape
    names = tuple(f"i{j}" for j in range(I))
    m = cov_cols.shape[1]
    scales = scales or ["binary"] * m
    specs = tuple(VariableSpec(f"x{j + 1}", scales[j]) for j in range(m))
    return Dataset(ResponseMatrix(names, values), CovariateTable(specs, cov_cols))


def null_dataset(seed, P=300, I=20):
    sim = generate_replication(ScenarioSpec(persons=P, items=I, seed=seed), 0)
    return sim.dataset


class TestExtendedUdif:
    def test_null_flag_rate_near_alpha(self):
        flags = 0
        total = 0
        for rep in range(30):
            data = null_dataset(1000 + rep)
            for item in range(data.n_items):
                res = fit_udif_extended(item, data, alpha=0.05)
                flags += res.flagged
                total += 1
        assert 0.02 <= flags / total <= 0.09

    def test_strong_uniform_shift_flagged(self):
        # item 0's log-odds drop by 1.6 for the x = 0 group at equal ability
        rng = np.random.default_rng(13)
        P = 800
        x = (rng.random(P) < 0.5).astype(float)
        theta = rng.standard_normal(P)
        probs = expit(theta[:, None] - np.array([0.0, 0.4, -0.2, 0.1]))
        probs[:, 0] = expit(theta - 1.6 * (x == 0))
        values = (rng.random((P, 4)) < probs).astype(np.int8)
        data = make_dataset(values, x[:, None])
        res = fit_udif_extended(0, data)
        assert res.flagged and res.lr.p_value < 1e-3

    def test_constant_covariate_rank_deficient(self):
        data = null_dataset(3)
        cov = CovariateTable((VariableSpec("x1", "binary"),),
                             np.zeros((data.n_persons, 1)))
        bad = Dataset(data.responses, cov)
        with pytest.raises(RankDeficientError):
            fit_udif_extended(0, bad)


class TestStrategies:
    def test_nested_chain_additivity(self):
        sim = generate_replication(
            ScenarioSpec(persons=400, items=20, dif_kind="nonuniform_binary",
                         dif_fraction=0.2, strength=0.6, seed=31), 0)
        for item in (0, 5):
            udif = fit_udif_extended(item, sim.dataset)
            nudif = fit_nudif_extended(item, sim.dataset)
            dif = fit_dif_extended(item, sim.dataset)
            assert dif.lr.statistic == pytest.approx(
                udif.lr.statistic + nudif.lr.statistic, abs=1e-8)
            assert dif.lr.statistic >= max(udif.lr.statistic, nudif.lr.statistic) - 1e-9

    def test_mirrored_data_gives_zero_nudif_statistic(self):
        # duplicating every person with x flipped makes the covariate exactly
        # uninformative: the full fit's offsets and interactions are zero
        rng = np.random.default_rng(5)
        P = 120
        y_half = (rng.random((P, 3)) < 0.5).astype(np.int8)
        values = np.vstack([y_half, y_half])
        x = np.concatenate([np.zeros(P), np.ones(P)])[:, None]
        data = make_dataset(values, x)
        res = fit_nudif_extended(0, data)
        assert res.lr.statistic < 1e-9
        res_dif = fit_dif_extended(0, data)
        assert res_dif.lr.statistic < 1e-9

    def test_df_accounting(self):
        sim = generate_replication(
            ScenarioSpec(persons=300, items=10, covariate_design="three_covariates",
                         seed=41), 0)
        assert fit_udif_extended(0, sim.dataset).lr.df == 3
        assert fit_dif_extended(0, sim.dataset).lr.df == 6
        assert fit_nudif_extended(0, sim.dataset).lr.df == 3


class TestClassicalGroups:
    def test_two_groups_equal_extended(self):
        sim = generate_replication(
            ScenarioSpec(persons=400, items=10, dif_kind="uniform_binary",
                         dif_fraction=0.2, strength=1.6, seed=7), 0)
        for item in (0, 3):
            classical = fit_classical_groups(item, sim.dataset, "x1", "udif")
            extended = fit_udif_extended(item, sim.dataset)
            assert classical.lr.statistic == pytest.approx(
                extended.lr.statistic, abs=1e-8)
            assert classical.lr.df == extended.lr.df == 1

    def test_three_group_null_rate(self):
        flags = 0
        total = 0
        for rep in range(12):
            sim = generate_replication(
                ScenarioSpec(persons=300, items=10, covariate_design="ordinal1",
                             seed=600 + rep), 0)
            # collapse 1..6 into three groups to get G=3
            cov = sim.dataset.covariates
            grouped = np.ceil(cov.values[:, 0] / 2.0)
            data = Dataset(sim.dataset.responses,
                           CovariateTable((VariableSpec("g", "ordinal"),),
                                          grouped[:, None]))
            for item in range(data.n_items):
                res = fit_classical_groups(item, data, "g", "udif")
                assert res.lr.df == 2
                flags += res.flagged
                total += 1
        assert 0.01 <= flags / total <= 0.10

    def test_reference_switch_invariance(self):
        sim = generate_replication(
            ScenarioSpec(persons=300, items=10, dif_kind="uniform_binary",
                         dif_fraction=0.2, strength=1.6, seed=9), 0)
        base = fit_classical_groups(0, sim.dataset, "x1", "udif")
        flipped = Dataset(sim.dataset.responses,
                          CovariateTable((VariableSpec("x1", "binary"),),
                                         1.0 - sim.dataset.covariates.values))
        other = fit_classical_groups(0, flipped, "x1", "udif")
        assert base.lr.statistic == pytest.approx(other.lr.statistic, abs=1e-8)

    def test_group_variable_needs_two_levels(self):
        data = null_dataset(11)
        cov = CovariateTable((VariableSpec("x1", "binary"),),
                             np.ones((data.n_persons, 1)))
        from iftree.errors import UsageError
        with pytest.raises(UsageError):
            fit_classical_groups(0, Dataset(data.responses, cov), "x1", "udif")


class TestSuite:
    def test_null_suite_flags_about_one_item(self):
        spec = ItemModelSpec(strategy="udif", mode="extended_vector")
        totals = []
        for rep in range(10):
            data = null_dataset(2000 + rep)
            results = run_classical_suite(data, spec, alpha=0.05)
            totals.append(sum(r.flagged for r in results))
        assert 0 <= np.mean(totals) <= 3.0

    def test_results_ordered_and_complete(self):
        data = null_dataset(5)
        spec = ItemModelSpec(strategy="dif", mode="extended_vector")
        results = run_classical_suite(data, spec)
        assert [r.item for r in results] == list(range(data.n_items))
        assert all(r.strategy == "dif" for r in results)

    def test_flag_consistency(self):
        data = null_dataset(6)
        spec = ItemModelSpec(strategy="udif")
        for r in run_classical_suite(data, spec, alpha=0.05):
            assert r.flagged == (r.lr.p_value < 0.05)

    def test_score_rescaling_invariance(self):
        sim = generate_replication(
            ScenarioSpec(persons=300, items=10, dif_kind="uniform_binary",
                         dif_fraction=0.2, strength=1.6, seed=19), 0)
        plain = Dataset(sim.dataset.responses, sim.dataset.covariates)
        scaled = Dataset(sim.dataset.responses, sim.dataset.covariates,
                         standardize=True)
        for item in (0, 4):
            a = fit_udif_extended(item, plain)
            b = fit_udif_extended(item, scaled)
            assert a.lr.statistic == pytest.approx(b.lr.statistic, abs=1e-7)
            assert a.flagged == b.flagged

    def test_spec_validation(self):
        from iftree.errors import UsageError
        with pytest.raises(UsageError):
            ItemModelSpec(strategy="bogus")
        with pytest.raises(UsageError):
            ItemModelSpec(strategy="udif", mode="classical_groups")
