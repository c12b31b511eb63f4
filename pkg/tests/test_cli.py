import json

import numpy as np
import pytest

from drm.cli import default_solver_method, main


def write_libsvm(path, X, y):
    lines = []
    for j in range(X.shape[1]):
        feats = " ".join(f"{i + 1}:{float(X[i, j])!r}" for i in range(X.shape[0]))
        lines.append(f"{int(y[j])} {feats}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def toy_train(tmp_path):
    X = np.array([[0.0, 0.2, 3.0, 3.3], [0.1, 0.0, 2.9, 3.1]])
    y = [1, 1, 2, 2]
    path = tmp_path / "train.libsvm"
    write_libsvm(path, X, y)
    return path


class TestTrain:
    def test_writes_model_and_reports_shape(self, tmp_path, toy_train, capsys):
        out = tmp_path / "model"
        rc = main(["train", str(toy_train), "--kernel", "rbf", "--gamma", "0.5",
                   "--alpha", "0.1", "--beta", "1.0", "--out", str(out)])
        assert rc == 0
        assert (out / "model.json").exists() and (out / "train.bin").exists()
        assert "n=4 p=2 g=2 group_sizes=[2 2]" in capsys.readouterr().out
        manifest = json.loads((out / "model.json").read_text())
        assert manifest["kernel"]["family"] == "rbf"

    def test_nonpositive_beta_exits_one(self, tmp_path, toy_train, capsys):
        rc = main(["train", str(toy_train), "--beta", "0",
                   "--out", str(tmp_path / "m")])
        assert rc == 1
        assert "beta" in capsys.readouterr().err

    def test_missing_file_exits_one(self, tmp_path, capsys):
        rc = main(["train", str(tmp_path / "nope.libsvm"), "--out", str(tmp_path / "m")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_retrain_is_byte_identical(self, tmp_path, toy_train):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["train", str(toy_train), "--kernel", "poly",
                         "--scale", "--out", str(out)]) == 0
        assert (a / "train.bin").read_bytes() == (b / "train.bin").read_bytes()
        assert (a / "model.json").read_text() == (b / "model.json").read_text()

    def test_csv_format(self, tmp_path, capsys):
        data = tmp_path / "train.csv"
        data.write_text("label,f1,f2\n1,0.0,0.1\n1,0.2,0.0\n2,3.0,2.9\n2,3.3,3.1\n")
        rc = main(["train", str(data), "--format", "csv", "--has-header",
                   "--out", str(tmp_path / "m")])
        assert rc == 0
        assert "n=4 p=2 g=2" in capsys.readouterr().out


class TestPredict:
    def _train(self, tmp_path, toy_train, extra=()):
        out = tmp_path / "model"
        assert main(["train", str(toy_train), "--kernel", "rbf", "--gamma", "0.5",
                     "--alpha", "0.1", "--beta", "0.1", "--out", str(out), *extra]) == 0
        return out

    def test_training_points_classified_consistently(self, tmp_path, toy_train):
        model = self._train(tmp_path, toy_train)
        out = tmp_path / "preds.csv"
        assert main(["predict", str(model), str(toy_train), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "index,label,delta_1,delta_2,iterations"
        assert len(lines) == 5
        for line in lines[1:]:
            idx, label, d1, d2, iters = line.split(",")
            # the reported label must be the argmin of the reported deltas
            expected = 1 if float(d1) <= float(d2) else 2
            assert int(label) == expected
        labels = [int(l.split(",")[1]) for l in lines[1:]]
        assert labels == [1, 1, 2, 2]

    def test_solver_override_matches_closed_form(self, tmp_path, toy_train):
        model = self._train(tmp_path, toy_train)
        outs = []
        for solver in ("closed", "ppa"):
            out = tmp_path / f"preds_{solver}.csv"
            assert main(["predict", str(model), str(toy_train),
                         "--solver", solver, "--out", str(out)]) == 0
            outs.append([l.split(",")[1] for l in out.read_text().strip().splitlines()[1:]])
        assert outs[0] == outs[1]

    def test_empty_input_writes_header_only(self, tmp_path, toy_train):
        model = self._train(tmp_path, toy_train)
        empty = tmp_path / "empty.libsvm"
        empty.write_text("\n")
        out = tmp_path / "preds.csv"
        assert main(["predict", str(model), str(empty), "--out", str(out)]) == 0
        assert out.read_text() == "index,label,delta_1,delta_2,iterations\n"

    def test_short_libsvm_rows_padded(self, tmp_path, toy_train):
        model = self._train(tmp_path, toy_train)
        short = tmp_path / "short.libsvm"
        short.write_text("1 1:0.1\n")  # feature 2 never appears
        out = tmp_path / "preds.csv"
        assert main(["predict", str(model), str(short), "--out", str(out)]) == 0
        assert len(out.read_text().strip().splitlines()) == 2

    def test_dimension_mismatch_exits_one(self, tmp_path, toy_train, capsys):
        model = self._train(tmp_path, toy_train)
        wide = tmp_path / "wide.libsvm"
        wide.write_text("1 1:0.1 2:0.2 3:0.3\n")
        rc = main(["predict", str(model), str(wide), "--out", str(tmp_path / "p.csv")])
        assert rc == 1
        assert "mismatch" in capsys.readouterr().err


class TestCv:
    def _data(self, tmp_path, seed=0):
        from drm.data import gaussian_blobs

        X, y = gaussian_blobs([12, 12], p=3, seed=seed, center_scale=4.0)
        path = tmp_path / "cv.libsvm"
        write_libsvm(path, X, y)
        return path

    def test_single_cell_grid_yields_one_row(self, tmp_path, capsys):
        data = self._data(tmp_path)
        gridfile = tmp_path / "grid.txt"
        gridfile.write_text("kernels=rbf\ngammas=0.5\nalphas=0.1\nbetas=1.0\n")
        out = tmp_path / "table.csv"
        rc = main(["cv", str(data), "--grid-file", str(gridfile), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("rbf,0.5,0.1,1,")
        assert "best cell: kernel=rbf" in capsys.readouterr().out

    def test_same_seed_same_table(self, tmp_path):
        data = self._data(tmp_path, seed=3)
        gridfile = tmp_path / "grid.txt"
        gridfile.write_text("kernels=linear,rbf\ngammas=0.5,2.0\nalphas=0,1\nbetas=0.1,1\n")
        tables = []
        for name in ("t1.csv", "t2.csv"):
            out = tmp_path / name
            assert main(["cv", str(data), "--grid-file", str(gridfile),
                         "--seed", "7", "--out", str(out)]) == 0
            tables.append(out.read_text())
        assert tables[0] == tables[1]

    def test_bad_grid_file_exits_one(self, tmp_path, capsys):
        data = self._data(tmp_path)
        gridfile = tmp_path / "grid.txt"
        gridfile.write_text("this is not key value\n")
        rc = main(["cv", str(data), "--grid-file", str(gridfile),
                   "--out", str(tmp_path / "t.csv")])
        assert rc == 1


class TestBench:
    def _data(self, tmp_path):
        from drm.data import gaussian_blobs

        X, y = gaussian_blobs([40, 40], p=5, seed=1)
        path = tmp_path / "bench.libsvm"
        write_libsvm(path, X, y)
        return path

    def test_traces_and_summary_written(self, tmp_path):
        data = self._data(tmp_path)
        out = tmp_path / "bench"
        rc = main(["bench", str(data), "--solvers", "gd,ppa", "--sizes", "30,60",
                   "--repeats", "3", "--alpha", "0.1", "--beta", "1.0",
                   "--eps", "1e-8", "--max-iter", "5000", "--out", str(out)])
        assert rc == 0
        for solver in ("gd", "ppa"):
            for size in (30, 60):
                for rep in range(3):
                    trace = out / f"trace_{solver}_n{size}_rep{rep}.csv"
                    assert trace.exists()
                    assert trace.read_text().splitlines()[0] == (
                        "iteration,objective,step_norm,elapsed_ns"
                    )
        summary = (out / "summary.csv").read_text().strip().splitlines()
        assert summary[0] == "solver,n,median_per_iter_ns,median_iterations"
        assert len(summary) == 5

    def test_solvers_reach_same_objective(self, tmp_path):
        data = self._data(tmp_path)
        out = tmp_path / "bench"
        assert main(["bench", str(data), "--solvers", "gd,ppa,apg", "--sizes", "50",
                     "--repeats", "1", "--alpha", "0.1", "--beta", "1.0",
                     "--eps", "1e-10", "--max-iter", "100000", "--out", str(out)]) == 0
        finals = []
        for solver in ("gd", "ppa", "apg"):
            rows = (out / f"trace_{solver}_n50_rep0.csv").read_text().strip().splitlines()
            finals.append(float(rows[-1].split(",")[1]))
        assert max(finals) - min(finals) <= 1e-6 * max(1.0, abs(finals[0]))

    def test_oversized_subset_exits_one(self, tmp_path, capsys):
        data = self._data(tmp_path)
        rc = main(["bench", str(data), "--sizes", "500", "--out", str(tmp_path / "b")])
        assert rc == 1
        assert "exceeds" in capsys.readouterr().err


class TestConfigFile:
    def test_flags_override_config(self, tmp_path, toy_train, capsys):
        cfg = tmp_path / "drm.conf"
        cfg.write_text("kernel=rbf\ngamma=0.5\nbeta=2.0\nscale=true\n")
        out = tmp_path / "model"
        rc = main(["--config", str(cfg), "train", str(toy_train),
                   "--beta", "0.25", "--out", str(out)])
        assert rc == 0
        manifest = json.loads((out / "model.json").read_text())
        assert manifest["kernel"]["family"] == "rbf"
        assert manifest["beta"] == 0.25
        assert manifest["scaling_divisors"] is not None


def test_default_solver_method_threshold():
    assert default_solver_method(2000) == "closed_form"
    assert default_solver_method(2001) == "ppa"
