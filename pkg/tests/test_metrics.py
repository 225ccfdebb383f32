import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_msvm.core import CoefModel
from sparse_msvm.metrics import (ReplicationRecord, aggregate, evaluate_model, read_frequency_csv,
                                 read_summary_csv, write_frequency_csv, write_summary_csv)
from sparse_msvm.simgen import DesignKind, SimDesign, generate, ground_truth

TRUTH = ground_truth(DesignKind.FIVE_CLASS)
_, _, TEST, _ = generate(SimDesign(DesignKind.FIVE_CLASS, 5, 5, 500, 0))


def record(te, ms=2, cm=True):
    sel = np.zeros(10, dtype=bool)
    sel[:ms] = True
    return ReplicationRecord(te, 41, 0, ms, cm, sel)


class TestEvaluate:
    def test_zero_model(self):
        r = evaluate_model(CoefModel.zeros(5, 10), TEST, TRUTH)
        assert (r.cz, r.iz, r.ms, r.cm) == (41, 9, 0, False)

    def test_bayes_pattern(self):
        r = evaluate_model(TRUTH.bayes_model, TEST, TRUTH)
        assert (r.cz, r.iz, r.ms, r.cm) == (41, 0, 2, True)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_model(CoefModel.zeros(5, 9), TEST, TRUTH)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariants(self, seed):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((5, 10))
        W[rng.random((5, 10)) < 0.5] = 0.0
        model = CoefModel(W, np.zeros(5))
        r = evaluate_model(model, TEST, TRUTH)
        assert r.cz + r.iz == int(np.sum(W == 0))
        assert r.ms == 10 - int(np.sum(np.all(W == 0, axis=0)))
        if r.cm:
            assert r.ms == len(TRUTH.relevant_vars)
        perm = rng.permutation(TEST.n)
        assert evaluate_model(model, TEST.subset(perm), TRUTH).test_error == r.test_error


class TestAggregate:
    def test_single_record(self):
        rep = aggregate([record(0.3)])
        assert rep.test_error_mean == 0.3 and rep.test_error_sd == 0.0 and rep.n_reps == 1

    def test_two_records(self):
        rep = aggregate([record(0.4), record(0.5, ms=3, cm=False)])
        assert rep.test_error_mean == pytest.approx(0.45)
        assert rep.test_error_sd == pytest.approx(0.0707, abs=1e-4)
        assert rep.test_error_se == pytest.approx(0.05)
        assert rep.cm_count == 1 and rep.ms_mean == 2.5
        np.testing.assert_array_equal(rep.selection_frequency[:4], [2, 2, 1, 0])

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])


def test_csv_round_trip(tmp_path):
    reports = {"L1": aggregate([record(0.4), record(0.5)]), "Supnorm": aggregate([record(0.41)])}
    write_summary_csv(reports, tmp_path / "s.csv", bayes=(0.387, 0.002, TRUTH))
    back = read_summary_csv(tmp_path / "s.csv")
    assert back["L1"]["TE"] == pytest.approx(0.45) and back["Supnorm"]["reps"] == 1
    assert back["Bayes"]["CZ"] == 41 and back["Bayes"]["MS"] == 2
    write_frequency_csv(reports, TRUTH.names, tmp_path / "f.csv")
    names, freq = read_frequency_csv(tmp_path / "f.csv")
    assert names == list(TRUTH.names)
    np.testing.assert_array_equal(freq["L1"], reports["L1"].selection_frequency)
