import numpy as np
import pytest

from sparse_msvm.cli import main, read_model, write_model
from sparse_msvm.core import CoefModel, Dataset, PenaltyKind, write_dataset_csv
from sparse_msvm.metrics import read_frequency_csv, read_summary_csv


def separable(seed=0, per_class=5, extra=0):
    rng = np.random.default_rng(seed)
    centres = np.array([[4.0, 0.0], [-2.0, 3.5], [-2.0, -3.5]])
    X = np.repeat(centres, per_class, axis=0) + 0.3 * rng.standard_normal((3 * per_class, 2))
    if extra:
        X = np.column_stack([X, rng.standard_normal((3 * per_class, extra))])
    return Dataset(X, np.repeat([1, 2, 3], per_class), 3)


@pytest.fixture
def files(tmp_path):
    write_dataset_csv(separable(0), tmp_path / "train.csv")
    write_dataset_csv(separable(1), tmp_path / "tune.csv")
    write_dataset_csv(separable(2, extra=1), tmp_path / "wide.csv")
    return tmp_path


def test_model_file_round_trip(tmp_path):
    model = CoefModel(np.array([[1.5, 0.0], [-1.5, 1e-300]]), [0.25, -0.25])
    write_model(tmp_path / "m.txt", model, 0.125, PenaltyKind.SUPNORM, ("a", "b c"),
                [(0.125, 0.2), (0.25, np.nan)])
    back, lam, kind, names, errors = read_model(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.W, model.W)
    np.testing.assert_array_equal(back.b, model.b)
    assert lam == 0.125 and kind is PenaltyKind.SUPNORM and names == ("a", "b c")
    assert errors[0] == (0.125, 0.2) and np.isnan(errors[1][1])


class TestTrainPredict:
    def test_huge_lambda_gives_empty_model(self, files):
        out = files / "m.txt"
        assert main(["train", "--data", str(files / "train.csv"), "--penalty", "supnorm",
                     "--lambda", "1e6", "--out", str(out)]) == 0
        model = read_model(out)[0]
        assert model.model_size() == 0

    def test_separable_fit_predicts_training_data(self, files, capsys):
        out = files / "m.txt"
        assert main(["train", "--data", str(files / "train.csv"), "--penalty", "l1",
                     "--lambda", "1e-4", "--out", str(out)]) == 0
        pred = files / "pred.csv"
        assert main(["predict", "--model", str(out), "--data", str(files / "train.csv"),
                     "--out", str(pred)]) == 0
        assert "error_rate=0.000000" in capsys.readouterr().out
        lines = pred.read_text().splitlines()
        assert lines[0] == "label" and len(lines) == 1 + 15

    def test_adaptive_two_stage_with_tuning_set(self, files):
        out = files / "m.txt"
        assert main(["train", "--data", str(files / "train.csv"), "--tune", str(files / "tune.csv"),
                     "--penalty", "adapt-sup1", "--grid=-4:4", "--out", str(out)]) == 0
        model, lam, kind, _, errors = read_model(out)
        assert kind is PenaltyKind.ADAPTIVE_SUP_I and len(errors) == 9
        assert lam in [e[0] for e in errors]

    def test_loocv(self, files):
        out = files / "m.txt"
        assert main(["train", "--data", str(files / "train.csv"), "--loocv", "--penalty", "l1",
                     "--grid=-2:0", "--out", str(out)]) == 0

    def test_needs_tuning_choice(self, files):
        assert main(["train", "--data", str(files / "train.csv"), "--penalty", "l1",
                     "--out", str(files / "m.txt")]) == 2

    def test_bad_flags(self, files):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", str(files / "train.csv"), "--penalty", "nope", "--out", "x"])
        assert exc.value.code == 2

    def test_malformed_csv(self, files, capsys):
        bad = files / "bad.csv"
        bad.write_text("x1,label\n1.0,1\nzz,2\n")
        assert main(["train", "--data", str(bad), "--penalty", "l1", "--lambda", "1",
                     "--out", str(files / "m.txt")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_dimension_mismatch(self, files):
        out = files / "m.txt"
        main(["train", "--data", str(files / "train.csv"), "--penalty", "l1", "--lambda", "0.1",
              "--out", str(out)])
        assert main(["predict", "--model", str(out), "--data", str(files / "wide.csv")]) == 1

    def test_deterministic(self, files):
        a, b = files / "a.txt", files / "b.txt"
        for out in (a, b):
            main(["train", "--data", str(files / "train.csv"), "--tune", str(files / "tune.csv"),
                  "--penalty", "supnorm", "--grid=-3:3", "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()


class TestSimulate:
    ARGS = ["simulate", "--design", "four-class", "--reps", "2", "--n", "40", "--n-test", "200",
            "--grid=-4:2", "--bayes-mc", "2000", "--methods", "l1,supnorm,adapt-sup1"]

    def test_outputs_parse_and_are_deterministic(self, tmp_path):
        assert main(self.ARGS + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(self.ARGS + ["--out-dir", str(tmp_path / "b"), "--threads", "2"]) == 0
        for name in ("summary.csv", "frequency.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        summary = read_summary_csv(tmp_path / "a" / "summary.csv")
        assert list(summary) == ["L1", "Supnorm", "Adapt-supI", "Bayes"]
        assert summary["Bayes"]["CZ"] == 32
        names, freq = read_frequency_csv(tmp_path / "a" / "frequency.csv")
        assert len(names) == 10 and all(f.max() <= 2 for f in freq.values())

    def test_bayes_only(self, tmp_path):
        assert main(["simulate", "--design", "five-class", "--methods", "bayes-only",
                     "--bayes-mc", "20000", "--out-dir", str(tmp_path)]) == 0
        summary = read_summary_csv(tmp_path / "summary.csv")
        assert list(summary) == ["Bayes"]
        assert abs(summary["Bayes"]["TE"] - 0.387) < 0.015

    def test_write_data(self, tmp_path):
        assert main(["simulate", "--design", "nonlinear", "--reps", "1", "--n", "20", "--n-test", "30",
                     "--methods", "bayes-only", "--bayes-mc", "1000", "--write-data",
                     "--out-dir", str(tmp_path)]) == 0
        header = (tmp_path / "rep000_train.csv").read_text().splitlines()[0].split(",")
        assert len(header) == 21 and header[-1] == "label"

    def test_unknown_method(self, tmp_path):
        assert main(["simulate", "--design", "five-class", "--methods", "ridge",
                     "--out-dir", str(tmp_path)]) == 2

    def test_unknown_design(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--design", "six-class", "--out-dir", str(tmp_path)])
        assert exc.value.code == 2


class TestGenes:
    def test_empty_screen_rejected(self, tmp_path):
        from gene_fixtures import informative_noise
        from sparse_msvm.genes import write_expression_csv
        write_expression_csv(informative_noise(0), tmp_path / "e.csv", tmp_path / "l.csv")
        assert main(["genes", "--train-expr", str(tmp_path / "e.csv"), "--train-labels",
                     str(tmp_path / "l.csv"), "--top", "0", "--bottom", "0",
                     "--out-dir", str(tmp_path / "o")]) == 2

    def test_malformed_expression_csv(self, tmp_path, capsys):
        (tmp_path / "e.csv").write_text("gene,s1,s2\ng1,1,2\ng2,1\n")
        (tmp_path / "l.csv").write_text("sample,label\ns1,1\ns2,2\n")
        assert main(["genes", "--train-expr", str(tmp_path / "e.csv"), "--train-labels",
                     str(tmp_path / "l.csv"), "--out-dir", str(tmp_path / "o")]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_small_run_outputs(self, tmp_path):
        from gene_fixtures import informative_noise
        from sparse_msvm.genes import write_expression_csv
        write_expression_csv(informative_noise(0, per_class=3, n_informative=4, n_noise=4),
                             tmp_path / "e.csv", tmp_path / "l.csv")
        write_expression_csv(informative_noise(1, per_class=2, n_informative=4, n_noise=4),
                             tmp_path / "t.csv", tmp_path / "tl.csv")
        assert main(["genes", "--train-expr", str(tmp_path / "e.csv"), "--train-labels",
                     str(tmp_path / "l.csv"), "--test-expr", str(tmp_path / "t.csv"),
                     "--test-labels", str(tmp_path / "tl.csv"), "--top", "4", "--bottom", "2",
                     "--penalty", "supnorm", "--grid=-3:0", "--out-dir", str(tmp_path / "o")]) == 0
        ranked = (tmp_path / "o" / "ranked_genes.csv").read_text().splitlines()
        r = [float(line.split(",")[2]) for line in ranked[1:]]
        assert r == sorted(r, reverse=True)
        groups = [line.split(",")[3] for line in ranked[1:]]
        assert groups[:4] == ["top"] * 4 and groups[-2:] == ["bottom"] * 2
        summary = (tmp_path / "o" / "gene_summary.csv").read_text().splitlines()
        assert summary[0] == "method,lambda,test_error,genes,top,bottom" and len(summary) == 2
