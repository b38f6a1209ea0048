"""Checkpoint container and command-line driver contracts."""

import hashlib
import json

import numpy as np
import pytest
import torch
import yaml

from coisac.baselines import build_model
from coisac.checkpoint import load_checkpoint, save_checkpoint
from coisac.cli import main
from coisac.errors import FormatError
from coisac.training import load_model_checkpoint, save_model_checkpoint


class TestCheckpointContainer:
    def test_round_trip_exact(self, tmp_path):
        header = {"model": "test", "schedule": [4, 8]}
        tensors = {
            "w": np.arange(12, dtype=np.float32).reshape(3, 4) / 7,
            "b": np.float32([[-1.5]]),
            "scalar": np.float32(3.25).reshape(()),
        }
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, header, tensors)
        h2, t2 = load_checkpoint(path)
        assert h2 == header
        assert set(t2) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(np.asarray(tensors[name], np.float32),
                                          t2[name])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(path, {"a": 1}, {"w": np.zeros(8, np.float32)})
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_model_checkpoint_round_trip(self, tmp_path):
        from conftest import tiny_config
        cfg = tiny_config()
        torch.manual_seed(0)
        model = build_model("lhgnn", cfg, schedule=[8, 8])
        path = tmp_path / "model.ckpt"
        save_model_checkpoint(path, model, extra={"note": "unit"})
        rebuilt, header, opt = load_model_checkpoint(path)
        assert header["model"] == "lhgnn" and header["extra"]["note"] == "unit"
        assert opt == {}
        for (na, pa), (nb, pb) in zip(model.state_dict().items(),
                                      rebuilt.state_dict().items()):
            assert na == nb
            np.testing.assert_array_equal(pa.numpy(), pb.numpy())


def _run(argv):
    return main(argv)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestCliCommands:
    def test_gen_deterministic(self, tmp_path):
        a = tmp_path / "a.cisd"
        b = tmp_path / "b.cisd"
        assert _run(["gen", "--profile", "smoke", "--out", str(a), "--n", "12",
                     "--seed", "5"]) == 0
        assert _run(["gen", "--profile", "smoke", "--out", str(b), "--n", "12",
                     "--seed", "5"]) == 0
        assert _digest(a) == _digest(b)

    def test_gen_bad_config_exit_code(self, tmp_path):
        cfgfile = tmp_path / "bad.yaml"
        cfgfile.write_text("scenario:\n  n_bs: 0\n")
        out = tmp_path / "x.cisd"
        assert _run(["gen", "--config", str(cfgfile), "--out", str(out)]) == 1

    def test_eval_reference(self, tmp_path, capsys):
        ds = tmp_path / "d.cisd"
        _run(["gen", "--profile", "smoke", "--out", str(ds), "--n", "16",
              "--seed", "3"])
        capsys.readouterr()
        assert _run(["eval", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "reference"]) == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["mean_sum_rate"] > 0

    def test_eval_missing_checkpoint_exit_code(self, tmp_path):
        ds = tmp_path / "d.cisd"
        _run(["gen", "--profile", "smoke", "--out", str(ds), "--n", "16",
              "--seed", "3"])
        assert _run(["eval", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "lhgnn",
                     "--checkpoint", str(tmp_path / "absent.ckpt")]) == 3

    def test_train_writes_artifacts(self, tmp_path):
        ds = tmp_path / "d.cisd"
        _run(["gen", "--profile", "smoke", "--out", str(ds), "--n", "20",
              "--seed", "3"])
        out = tmp_path / "run"
        assert _run(["train", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "lhgnn", "--out", str(out), "--epochs", "2",
                     "--seed", "1"]) == 0
        assert (out / "lhgnn_s1.ckpt").exists()
        report = (out / "lhgnn_s1_report.csv").read_text()
        assert "mean_speb" in report

    def test_sweep_static_methods_and_append(self, tmp_path):
        out = tmp_path / "sweep"
        spec = {
            "profile": "smoke", "methods": ["reference", "random"],
            "axis": "power_dbm", "values": [10, 20], "seeds": 1,
            "out": str(out), "n_eval": 6, "n_train": 16, "master_seed": 1,
        }
        spec_path = tmp_path / "sweep.yaml"
        spec_path.write_text(yaml.safe_dump(spec))
        assert _run(["sweep", "--spec", str(spec_path)]) == 0
        rows = (out / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2      # header + methods x values
        assert _run(["sweep", "--spec", str(spec_path)]) == 0
        rows2 = (out / "results.csv").read_text().splitlines()
        assert len(rows2) == 1 + 2 * 2 * 2   # appended, never overwritten
        run_ids = {line.split(",")[0] for line in rows[1:]}
        assert len(run_ids) == 1

    def test_sweep_missing_checkpoints_exit_code(self, tmp_path):
        spec = {
            "profile": "smoke", "methods": ["lhgnn"], "axis": "power_dbm",
            "values": [20], "seeds": 1, "out": str(tmp_path / "s"),
            "n_eval": 4, "n_train": 16, "master_seed": 0,
        }
        spec_path = tmp_path / "sweep.yaml"
        spec_path.write_text(yaml.safe_dump(spec))
        assert _run(["sweep", "--spec", str(spec_path)]) == 3

    def test_sweep_bad_axis_exit_code(self, tmp_path):
        spec_path = tmp_path / "sweep.yaml"
        spec_path.write_text(yaml.safe_dump(
            {"methods": ["random"], "axis": "bogus", "values": [1]}))
        assert _run(["sweep", "--spec", str(spec_path)]) == 1

    def test_sweep_train_inline_noise_axis(self, tmp_path):
        out = tmp_path / "sweep"
        spec = {
            "profile": "smoke", "methods": ["lhgnn", "reference"],
            "axis": "csi_snr_db", "values": [0, 20], "seeds": 1,
            "out": str(out), "n_eval": 4, "n_train": 16, "master_seed": 2,
            "epochs": 2,
        }
        spec_path = tmp_path / "sweep.yaml"
        spec_path.write_text(yaml.safe_dump(spec))
        assert _run(["sweep", "--spec", str(spec_path), "--train-inline"]) == 0
        rows = (out / "results.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 2
        assert (out / "checkpoints").is_dir()

    def test_train_resume(self, tmp_path):
        ds = tmp_path / "d.cisd"
        _run(["gen", "--profile", "smoke", "--out", str(ds), "--n", "20",
              "--seed", "3"])
        out = tmp_path / "runA"
        assert _run(["train", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "lhgnn", "--out", str(out), "--epochs", "1",
                     "--seed", "6"]) == 0
        out2 = tmp_path / "runB"
        assert _run(["train", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "lhgnn", "--out", str(out2), "--epochs", "2",
                     "--seed", "6", "--resume", str(out / "lhgnn_s6.ckpt")]) == 0
        # one straight 2-epoch run must match the resumed checkpoint exactly
        out3 = tmp_path / "runC"
        assert _run(["train", "--profile", "smoke", "--dataset", str(ds),
                     "--method", "lhgnn", "--out", str(out3), "--epochs", "2",
                     "--seed", "6"]) == 0
        a = (out2 / "lhgnn_s6.ckpt").read_bytes()
        b = (out3 / "lhgnn_s6.ckpt").read_bytes()
        assert a == b

    def test_plot_from_results(self, tmp_path):
        out = tmp_path / "sweep"
        spec = {
            "profile": "smoke", "methods": ["random"], "axis": "power_dbm",
            "values": [10, 20], "seeds": 1, "out": str(out),
            "n_eval": 4, "n_train": 16, "master_seed": 1,
        }
        spec_path = tmp_path / "sweep.yaml"
        spec_path.write_text(yaml.safe_dump(spec))
        _run(["sweep", "--spec", str(spec_path)])
        assert _run(["plot", "--results", str(out / "results.csv"),
                     "--out", str(out)]) == 0
        assert (out / "rate_vs_power_dbm.png").exists()

    def test_plot_failure_never_fails_the_run(self, tmp_path):
        bad = tmp_path / "results.csv"
        bad.write_text("not,a,results\nfile,at,all\n")
        assert _run(["plot", "--results", str(bad), "--out", str(tmp_path)]) == 0

    def test_profile_dataset_sizes(self):
        from coisac.profiles import dataset_size
        assert dataset_size("paper") == 4000
        assert dataset_size("smoke") == 128

    def test_usage_error_exit_code(self):
        assert _run(["gen"]) == 1      # missing --out
