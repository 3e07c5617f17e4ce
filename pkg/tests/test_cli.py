import subprocess
import sys

import numpy as np
import pytest

from sthcss.cli import main, read_config
from sthcss.data import SensorSeries, load_csv, write_csv
from sthcss.hypergraph import read_matrix_csv, read_pgm
from sthcss.model import load_checkpoint
from sthcss.training import History, MetricsReport

SMALL = ["--window", "16", "--channels", "8", "--hidden", "8", "--st-blocks", "1"]


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-data", str(d / "s.csv"), "--length", "400"]) == 0
    return d / "s.csv"


@pytest.fixture(scope="module")
def trained(small_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", str(small_csv), "--epochs", "2", "--out", str(out)] + SMALL) == 0
    return out


class TestGenData:
    def test_default_shape(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "synthetic.csv").read_text().splitlines()
        assert len(lines) == 6001
        assert all(len(line.split(",")) == 13 for line in lines[:5])
        out = capsys.readouterr().out
        assert "D=12 T=6000 groups=4,4,4" in out and "config seed=42" in out

    def test_seed_reproducible(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert main(["gen-data", str(tmp_path / name), "--seed", "7", "--length", "300"]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    @pytest.mark.parametrize("groups", ["4,x", "4,4", ""])
    def test_bad_groups(self, tmp_path, groups):
        assert main(["gen-data", str(tmp_path / "x.csv"), "--groups", groups]) == 1

    def test_unwritable(self, tmp_path):
        assert main(["gen-data", str(tmp_path / "missing" / "x.csv"), "--length", "100"]) == 2

    def test_bad_flag_value(self, tmp_path):
        assert main(["gen-data", "--length", "many"]) == 1


class TestConfig:
    def test_file_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nlength = 250\nseed=3\n\nsensors=6\ngroups=3,3\n")
        assert main(["gen-data", str(tmp_path / "d.csv"), "--config", str(cfg), "--seed", "5"]) == 0
        out = capsys.readouterr().out
        assert "config length=250" in out and "config seed=5" in out
        s = load_csv(tmp_path / "d.csv")
        assert (s.T, s.D) == (250, 6)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("lenght=250\n")
        assert main(["gen-data", "--config", str(cfg)]) == 1

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_saved_config_round_trip(self, tmp_path, capsys):
        saved = tmp_path / "saved.cfg"
        assert main(["gen-data", str(tmp_path / "a.csv"), "--length", "120", "--seed", "9",
                     "--save-config", str(saved)]) == 0
        first = capsys.readouterr().out
        assert read_config(saved)["length"] == "120"
        assert main(["gen-data", str(tmp_path / "b.csv"), "--config", str(saved)]) == 0
        assert capsys.readouterr().out.replace("b.csv", "a.csv") == first
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestTrainEval:
    def test_outputs(self, trained, capsys):
        m = MetricsReport.from_text((trained / "metrics.txt").read_text())
        keys = [line.split("=")[0] for line in (trained / "metrics.txt").read_text().splitlines()]
        assert {"nmae", "nrmse", "mape", "r2"} <= set(keys)
        assert np.isfinite(m.r2)
        h = History.read_csv(trained / "history.csv")
        assert h.epoch == [0, 1, 2]
        cfg, _, buffers, meta = load_checkpoint(trained / "model.ckpt")
        assert cfg.W == 16 and cfg.D == 12 and meta["target_name"] == "y"
        assert buffers["hypergraph.N"].shape == (12, 12)

    def test_eval_bit_identical(self, trained, small_csv, tmp_path):
        assert main(["eval", str(trained / "model.ckpt"), str(small_csv), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "eval_metrics.txt").read_bytes() == (trained / "metrics.txt").read_bytes()

    def test_defaults_echo(self, tmp_path, capsys):
        assert main(["gen-data", str(tmp_path / "d.csv"), "--length", "600"]) == 0
        rc = main(["train", str(tmp_path / "d.csv"), "--epochs", "0", "--out", str(tmp_path), "--window", "85",
                   "--batch", "64", "--lr", "0.001", "--mixers", "2", "--kernel", "7",
                   "--dilation", "1", "--channels", "8", "--hidden", "8", "--st-blocks", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        for line in ("window=85", "batch=64", "lr=0.001", "mixers=2", "kernel=7", "dilation=1"):
            assert f"config {line}" in out

    def test_zero_epochs(self, small_csv, tmp_path):
        assert main(["train", str(small_csv), "--epochs", "0", "--out", str(tmp_path)] + SMALL) == 0
        assert (tmp_path / "model.ckpt").exists()
        assert History.read_csv(tmp_path / "history.csv").epoch == [0]
        assert main(["eval", str(tmp_path / "model.ckpt"), str(small_csv), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "eval_metrics.txt").read_text() == (tmp_path / "metrics.txt").read_text()

    def test_ridge_report(self, small_csv, tmp_path):
        assert main(["train", str(small_csv), "--epochs", "0", "--ridge", "true",
                     "--out", str(tmp_path)] + SMALL) == 0
        assert MetricsReport.from_text((tmp_path / "ridge_metrics.txt").read_text()).n > 0

    def test_corrupt_magic(self, trained, small_csv, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_text("XXXX" + (trained / "model.ckpt").read_text()[4:])
        assert main(["eval", str(bad), str(small_csv), "--out", str(tmp_path)]) == 2

    def test_dimension_mismatch(self, trained, small_csv, tmp_path):
        s = load_csv(small_csv)
        write_csv(SensorSeries(s.names[:5], s.values[:, :5], s.target_name, s.target), tmp_path / "d5.csv")
        assert main(["eval", str(trained / "model.ckpt"), str(tmp_path / "d5.csv"),
                     "--out", str(tmp_path)]) == 1

    def test_missing_data(self, tmp_path):
        assert main(["train", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    def test_window_too_long(self, small_csv, tmp_path):
        assert main(["train", str(small_csv), "--window", "300", "--out", str(tmp_path)]) == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit(self, small_csv, tmp_path, capsys):
        rc = main(["train", str(small_csv), "--epochs", "3", "--lr", "1e300", "--out", str(tmp_path)]
                  + SMALL)
        assert rc == 3
        assert "epoch=" in capsys.readouterr().err


class TestInspectGraph:
    def test_outputs(self, small_csv, tmp_path, capsys):
        assert main(["inspect-graph", str(small_csv), "--out", str(tmp_path)]) == 0
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["adjacency.csv", "adjacency.pgm", "adjacency_correlation.csv",
                         "adjacency_correlation.pgm", "report.txt"]
        N = read_matrix_csv(tmp_path / "adjacency.csv")
        assert N.shape == (12, 12) and np.allclose(N, N.T)
        assert read_pgm(tmp_path / "adjacency.pgm").shape == (12, 12)
        report = (tmp_path / "report.txt").read_text()
        score = float(report.split("alignment_score=")[1])
        assert score > 0.5
        assert "alignment score" in capsys.readouterr().out

    def test_from_checkpoint(self, trained, small_csv, tmp_path):
        assert main(["inspect-graph", str(small_csv), "--checkpoint", str(trained / "model.ckpt"),
                     "--out", str(tmp_path)]) == 0
        _, _, buffers, _ = load_checkpoint(trained / "model.ckpt")
        np.testing.assert_array_equal(read_matrix_csv(tmp_path / "adjacency.csv"), buffers["hypergraph.N"])

    def test_k1_undefined(self, small_csv, tmp_path):
        assert main(["inspect-graph", str(small_csv), "--k", "1", "--out", str(tmp_path)]) == 0
        np.testing.assert_array_equal(read_matrix_csv(tmp_path / "adjacency.csv"), np.eye(12))
        assert "undefined (N off-diagonal constant)" in (tmp_path / "report.txt").read_text()

    def test_degenerate_scale(self, tmp_path):
        s = SensorSeries(("a", "b", "c"), np.ones((50, 3)), "y", np.arange(50.0))
        write_csv(s, tmp_path / "flat.csv")
        with pytest.warns(RuntimeWarning):
            assert main(["inspect-graph", str(tmp_path / "flat.csv"), "--k", "2",
                         "--out", str(tmp_path)]) == 3


class TestSweep:
    def test_kernel_grid(self, small_csv, tmp_path):
        rc = main(["sweep", str(small_csv), "--kernel", "3,5,7,9,11", "--epochs", "1",
                   "--out", str(tmp_path), "--window", "16", "--channels", "12", "--hidden", "8",
                   "--st-blocks", "1"])
        assert rc == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 6
        assert [line.split(",")[2] for line in lines[1:]] == ["ok"] * 5

    def test_mixer_grid(self, small_csv, tmp_path):
        assert main(["sweep", str(small_csv), "--mixers", "1,2,3,4,5", "--epochs", "0",
                     "--out", str(tmp_path)] + SMALL) == 0
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 6

    def test_empty_grid(self, small_csv, tmp_path):
        assert main(["sweep", str(small_csv), "--kernel", "", "--out", str(tmp_path)]) == 1

    def test_all_failed(self, small_csv, tmp_path):
        rc = main(["sweep", str(small_csv), "--kernel", "9,11", "--epochs", "0",
                   "--out", str(tmp_path)] + SMALL)
        assert rc != 0
        assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 3


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sthcss", "gen-data", str(tmp_path / "d.csv"),
                        "--length", "100"], capture_output=True, text=True)
    assert r.returncode == 0 and "T=100" in r.stdout
    r = subprocess.run([sys.executable, "-m", "sthcss", "nonsense"], capture_output=True, text=True)
    assert r.returncode == 1
