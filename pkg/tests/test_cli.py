import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from toponet.cli import main
from toponet.metrics import integration_window, write_theta_csv
from toponet.training import OptimizerConfig, TrainConfig


@pytest.fixture
def config(tmp_path):
    cfg = TrainConfig(optimizer=OptimizerConfig(steps=150)).to_dict()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestVerbs:
    def test_train_then_eval(self, tmp_path, config):
        out = tmp_path / "run"
        assert main(["train", "--config", str(config), "--tau", "1", "--out", str(out)]) == 0
        assert (out / "checkpoint" / "manifest.json").exists()
        log = read_csv(out / "train_log.csv")
        assert log[0] == ["step", "loss", "topo_fc1"] and len(log) > 2
        assert main(["eval", "--checkpoint", str(out / "checkpoint"), "--out", str(out)]) == 0
        acc = float(read_csv(out / "eval.csv")[1][0])
        manifest = json.loads((out / "checkpoint" / "manifest.json").read_text())
        assert acc == manifest["metrics"]["accuracy"]

    @pytest.mark.parametrize("verb,method", [("prune-curve", "prune"), ("downsample-curve", "downsample")])
    def test_curves(self, tmp_path, config, verb, method):
        assert main([verb, "--config", str(config), "--levels", "0,0.5,0.8", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / f"{method}_curve.csv")
        assert rows[0] == ["method", "level", "param_ratio", "performance", "performance_delta"]
        assert [float(r[1]) for r in rows[1:]] == [0.0, 0.5, 0.8]
        assert float(rows[1][4]) == 0.0

    def test_maps(self, tmp_path, config):
        assert main(["maps", "--config", str(config), "--bins", "5", "--out", str(tmp_path)]) == 0
        grid = read_csv(tmp_path / "fc1_class0_t.csv")
        assert len(grid) == 8 and all(len(r) == 8 for r in grid)
        ssim = read_csv(tmp_path / "fc1_ssim.csv")
        assert ssim[0][1:] == [f"class{k}" for k in range(8)]
        m = np.array([[float(v) for v in r[1:]] for r in ssim[1:]])
        np.testing.assert_array_equal(m, m.T)
        assert (tmp_path / "fc1_smoothness.csv").exists()

    def test_sweep(self, tmp_path, config):
        assert main(["sweep", "--config", str(config), "--taus", "0,1,10", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "sweep.csv")
        assert len(rows) == 4 and [float(r[0]) for r in rows[1:]] == [0.0, 1.0, 10.0]

    def test_fit_window(self, tmp_path):
        d = np.arange(32.0)
        write_theta_csv(tmp_path / "theta.csv", d, integration_window(d, 0.7, 1.0, 0.5))
        assert main(["fit-window", "--input", str(tmp_path / "theta.csv"), "--out", str(tmp_path)]) == 0
        header, row = read_csv(tmp_path / "window_fit.csv")
        assert header == ["a", "b", "c", "residual"]
        a, b, c, _ = map(float, row)
        assert abs(a - 0.7) < 0.05 and abs(b - 1.0) < 0.05 and abs(c - 0.5) < 0.05

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "toponet.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "fit-window" in r.stdout


class TestExitCodes:
    def test_config_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"optimizer": {"lr": -1}}))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_unknown_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_numeric_failure(self, tmp_path):
        p = tmp_path / "theta.csv"
        write_theta_csv(p, [0, 1, 2], [1.0, 0.5, 0.2])
        assert main(["fit-window", "--input", str(p), "--out", str(tmp_path)]) == 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self, tmp_path):
        cfg = TrainConfig(optimizer=OptimizerConfig(name="sgd", lr=1e200, steps=20)).to_dict()
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        assert main(["train", "--config", str(p), "--out", str(tmp_path)]) == 3

    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 4

    def test_missing_input(self, tmp_path):
        assert main(["fit-window", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 4

    def test_bad_flag_value(self):
        with pytest.raises(SystemExit) as info:
            main(["train", "--seed", "-1"])
        assert info.value.code == 2


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["train", "--tau", "5", "--seed", "9"],
            ["prune-curve", "--tau", "5", "--seed", "9", "--levels", "0,0.8"],
            ["maps", "--seed", "9"],
        ],
    )
    def test_byte_identical(self, tmp_path, config, argv):
        outs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main([*argv, "--config", str(config), "--out", str(out)]) == 0
            outs.append(snapshot(out))
        assert outs[0] == outs[1] and outs[0]
