import json

import numpy as np
import pytest

from iftree.data import (
    CovariateTable,
    Dataset,
    ResponseMatrix,
    VariableSpec,
    compute_test_scores,
    load_covariates,
    load_responses,
    save_covariates,
    save_responses,
)
from iftree.errors import DataError
from iftree.simulate import ScenarioSpec, generate_replication


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoadResponses:
    def test_smallest_wellformed(self, tmp_path):
        p = write(tmp_path / "r.csv", "i1,i2\n0,1\n1,1\n1,0\n")
        r = load_responses(p)
        assert (r.n_persons, r.n_items) == (3, 2)
        assert r.item_names == ("i1", "i2")

    def test_nonbinary_entry_names_cell(self, tmp_path):
        rows = ["i1,i2,i3"] + ["0,1,0"] * 4 + ["0,1,2"] + ["1,0,0"]
        p = write(tmp_path / "r.csv", "\n".join(rows) + "\n")
        with pytest.raises(DataError) as err:
            load_responses(p)
        assert "row 5" in str(err.value) and "'i3'" in str(err.value)

    def test_missing_entry_rejected(self, tmp_path):
        p = write(tmp_path / "r.csv", "i1,i2\n0,\n1,1\n")
        with pytest.raises(DataError, match="listwise"):
            load_responses(p)

    def test_duplicate_item_name(self, tmp_path):
        p = write(tmp_path / "r.csv", "i1,i1\n0,1\n1,1\n")
        with pytest.raises(DataError, match="duplicate"):
            load_responses(p)

    def test_ragged_row(self, tmp_path):
        p = write(tmp_path / "r.csv", "i1,i2\n0,1,1\n1,1\n")
        with pytest.raises(DataError, match="cells"):
            load_responses(p)

    def test_roundtrip_simulated(self, tmp_path):
        sim = generate_replication(ScenarioSpec(persons=800, items=20, seed=4), 0)
        p = tmp_path / "r.csv"
        save_responses(sim.dataset.responses, p)
        back = load_responses(p)
        assert back.item_names == sim.dataset.responses.item_names
        assert np.array_equal(back.values, sim.dataset.responses.values)


class TestLoadCovariates:
    def make_schema(self, tmp_path, entries):
        return write(tmp_path / "schema.json", json.dumps({"variables": entries}))

    def test_three_covariates(self, tmp_path):
        sim = generate_replication(
            ScenarioSpec(persons=800, items=20, covariate_design="three_covariates",
                         seed=1), 0)
        csv_p = tmp_path / "c.csv"
        schema_p = tmp_path / "schema.json"
        save_covariates(sim.dataset.covariates, csv_p, schema_path=schema_p)
        cov = load_covariates(csv_p, schema_p)
        assert cov.n_variables == 3
        assert [v.scale for v in cov.variables] == ["binary", "binary", "continuous"]
        assert np.array_equal(cov.values, sim.dataset.covariates.values)

    def test_binary_violation(self, tmp_path):
        schema = self.make_schema(tmp_path, [{"name": "x1", "scale": "binary"}])
        p = write(tmp_path / "c.csv", "x1\n0\n0.5\n1\n")
        with pytest.raises(DataError) as err:
            load_covariates(p, schema)
        assert "row 2" in str(err.value) and "'x1'" in str(err.value)

    def test_ordinal_levels(self, tmp_path):
        schema = self.make_schema(tmp_path, [{"name": "x1", "scale": "ordinal"}])
        p = write(tmp_path / "c.csv", "x1\n" + "\n".join(str(v) for v in [1, 2, 3, 4, 5, 6]) + "\n")
        cov = load_covariates(p, schema)
        assert cov.variables[0].scale == "ordinal"
        assert sorted(set(cov.values[:, 0])) == [1, 2, 3, 4, 5, 6]

    def test_unknown_scale_suggests_dummy_coding(self, tmp_path):
        schema = self.make_schema(tmp_path, [{"name": "x1", "scale": "nominal"}])
        p = write(tmp_path / "c.csv", "x1\n1\n2\n")
        with pytest.raises(DataError, match="dummy-code"):
            load_covariates(p, schema)

    def test_schema_data_mismatch(self, tmp_path):
        schema = self.make_schema(tmp_path, [{"name": "x1", "scale": "binary"},
                                             {"name": "x2", "scale": "binary"}])
        p = write(tmp_path / "c.csv", "x1\n0\n1\n")
        with pytest.raises(DataError, match="do not match"):
            load_covariates(p, schema)

    def test_ordinal_non_integer(self, tmp_path):
        schema = self.make_schema(tmp_path, [{"name": "x1", "scale": "ordinal"}])
        p = write(tmp_path / "c.csv", "x1\n1\n2.5\n")
        with pytest.raises(DataError, match="non-integer"):
            load_covariates(p, schema)


class TestScores:
    def test_row_sums(self):
        r = ResponseMatrix(("a", "b", "c", "d"),
                           np.array([[1, 1, 0, 1], [0, 0, 0, 0]], dtype=np.int8))
        s = compute_test_scores(r)
        assert s.values.tolist() == [3.0, 0.0]

    def test_simulated_range_and_oracle(self):
        sim = generate_replication(ScenarioSpec(persons=800, items=20, seed=9), 0)
        s = compute_test_scores(sim.dataset.responses)
        assert s.values.min() >= 0 and s.values.max() <= 20
        expected = [sum(int(v) for v in row) for row in sim.dataset.responses.values]
        assert s.values.tolist() == expected

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        vals = (rng.random((30, 5)) < 0.5).astype(np.int8)
        r1 = ResponseMatrix(tuple("abcde"), vals)
        perm = rng.permutation(30)
        r2 = ResponseMatrix(tuple("abcde"), vals[perm])
        s1 = compute_test_scores(r1).values
        s2 = compute_test_scores(r2).values
        assert np.array_equal(s1[perm], s2)

    def test_rest_score_and_standardize(self):
        vals = np.array([[1, 1, 0], [0, 1, 1], [1, 1, 1], [0, 0, 0]], dtype=np.int8)
        r = ResponseMatrix(("a", "b", "c"), vals)
        cov = CovariateTable((VariableSpec("x1", "binary"),),
                             np.array([[0.0], [1.0], [0.0], [1.0]]))
        d = Dataset(r, cov, rest_score=True)
        assert d.score_for_item(0).tolist() == [1.0, 2.0, 2.0, 0.0]
        d2 = Dataset(r, cov, standardize=True)
        assert d2.score_for_item(0).tolist() == [2 / 3, 2 / 3, 1.0, 0.0]


class TestValidation:
    def test_values_immutable(self):
        r = ResponseMatrix(("a", "b"), np.array([[0, 1], [1, 0]], dtype=np.int8))
        with pytest.raises(ValueError):
            r.values[0, 0] = 1

    def test_person_count_mismatch(self):
        r = ResponseMatrix(("a", "b"), np.array([[0, 1], [1, 0]], dtype=np.int8))
        cov = CovariateTable((VariableSpec("x1", "binary"),), np.zeros((3, 1)))
        with pytest.raises(DataError, match="persons"):
            Dataset(r, cov)

    def test_minimum_sizes(self):
        with pytest.raises(DataError):
            ResponseMatrix(("a",), np.array([[0], [1]], dtype=np.int8))
        with pytest.raises(DataError):
            ResponseMatrix(("a", "b"), np.array([[0, 1]], dtype=np.int8))

    def test_nonbinary_matrix_entry(self):
        with pytest.raises(DataError, match="row 2"):
            ResponseMatrix(("a", "b"), np.array([[0, 1], [2, 0]], dtype=np.int8))
