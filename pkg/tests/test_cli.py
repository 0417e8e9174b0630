"""Config parsing, subcommand flows, artifacts, and exit codes."""

import json

import numpy as np
import pytest

from foalnet.cli import (
    CONFIG_SCHEMA,
    ConfigError,
    _model_config,
    format_resolved,
    main,
    parse_config,
)
from foalnet.data import load_dataset
from foalnet.model import FoalNet, save_checkpoint

BASE_CONFIG = """\
# tiny run for the test suite
dataset = {dataset}
out_dir = {out_dir}
val_group = 1
seed = 3
batch_size = 16
epochs = {epochs}
lr = 0.003
heads = 2
fusion_layers = 1
attn_dropout = 0.0
proj_hidden = 32
proj_dropout = 0.0
proj_dim = 16
"""


def write_config(path, dataset, out_dir, epochs=2, extra=""):
    path.write_text(BASE_CONFIG.format(dataset=dataset, out_dir=out_dir,
                                       epochs=epochs) + extra)
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset plus one finished training run, shared."""
    root = tmp_path_factory.mktemp("cli")
    dataset = root / "data.bin"
    rc = main(["gen-data", "--out", str(dataset), "--groups", "2",
               "--per-class", "6", "--d-a", "16", "--d-v", "8",
               "--t-frames", "4", "--f-frames", "2", "--scheme", "redundant",
               "--noise", "0.5", "--seed", "5"])
    assert rc == 0
    run_dir = root / "run"
    config = write_config(root / "train.cfg", dataset, run_dir, epochs=3)
    assert main(["train", "--config", str(config)]) == 0
    return {"root": root, "dataset": dataset, "config": config, "run": run_dir}


class TestParseConfig:
    def test_defaults_and_overrides(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("epochs = 7\nlambda = 0.5\nenable_mem = false\n")
        cfg = parse_config(path)
        assert cfg["epochs"] == 7
        assert cfg["lambda"] == 0.5
        assert cfg["enable_mem"] is False
        assert cfg["lr"] == CONFIG_SCHEMA["lr"][1]
        assert cfg["dataset"] is None

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("\n# full-line comment\nseed = 9  # trailing comment\n\n")
        assert parse_config(path)["seed"] == 9

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("learning_rate = 0.1\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("epochs = soon\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config(path)

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ConfigError, match="key = value"):
            parse_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "absent.cfg")

    def test_bool_spellings(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("l2_normalize = off\nenable_avel = YES\n")
        cfg = parse_config(path)
        assert cfg["l2_normalize"] is False
        assert cfg["enable_avel"] is True

    def test_resolved_round_trips(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("dataset = d.bin\nout_dir = o\nepochs = 4\n")
        cfg = parse_config(path)
        echo = tmp_path / "echo.cfg"
        echo.write_text(format_resolved(cfg))
        assert parse_config(echo) == cfg


class TestGenData:
    def test_byte_deterministic(self, tmp_path, capsys):
        args = ["--groups", "2", "--per-class", "3", "--d-a", "8", "--d-v", "8",
                "--seed", "7"]
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert main(["gen-data", "--out", str(a)] + args) == 0
        assert main(["gen-data", "--out", str(b)] + args) == 0
        assert a.read_bytes() == b.read_bytes()
        out = capsys.readouterr().out
        assert "wrote 24 samples" in out

    def test_seed_changes_bytes(self, tmp_path):
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        main(["gen-data", "--out", str(a), "--groups", "1", "--per-class", "2"])
        main(["gen-data", "--out", str(b), "--groups", "1", "--per-class", "2",
              "--seed", "8"])
        assert a.read_bytes() != b.read_bytes()

    def test_rejects_bad_scheme_args(self, tmp_path):
        rc = main(["gen-data", "--out", str(tmp_path / "x.bin"),
                   "--classes", "3"])  # complementary needs 4 classes
        assert rc == 2


class TestTrain:
    def test_artifacts(self, workspace):
        run = workspace["run"]
        for name in ("config.resolved", "metrics.ndjson", "best.ckpt",
                     "summary.txt"):
            assert (run / name).exists(), name
        rows = [json.loads(line)
                for line in (run / "metrics.ndjson").read_text().splitlines()]
        assert [r["epoch"] for r in rows] == [1, 2, 3]
        assert all(r["fold"] == 1 for r in rows)  # fold column carries val_group
        summary = (run / "summary.txt").read_text()
        assert "best epoch" in summary and "confusion" in summary

    def test_resolved_config_reproduces_run(self, workspace, tmp_path, capsys):
        resolved = parse_config(workspace["run"] / "config.resolved")
        rerun_dir = tmp_path / "rerun"
        cfg_path = tmp_path / "rerun.cfg"
        resolved["out_dir"] = str(rerun_dir)
        cfg_path.write_text(format_resolved(resolved))
        capsys.readouterr()
        assert main(["train", "--config", str(cfg_path)]) == 0
        capsys.readouterr()
        assert ((rerun_dir / "metrics.ndjson").read_text()
                == (workspace["run"] / "metrics.ndjson").read_text())
        assert ((rerun_dir / "best.ckpt").read_bytes()
                == (workspace["run"] / "best.ckpt").read_bytes())

    def test_missing_required_keys(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("epochs = 1\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "missing required keys" in capsys.readouterr().err

    def test_missing_dataset_file(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", tmp_path / "absent.bin",
                           tmp_path / "out")
        assert main(["train", "--config", str(cfg)]) == 3
        assert "data error" in capsys.readouterr().err

    def test_empty_val_group(self, workspace, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.cfg", workspace["dataset"],
                           tmp_path / "out", extra="val_group = 9\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "val_group" in capsys.readouterr().err


class TestEval:
    def test_reproduces_training_summary(self, workspace, capsys):
        run = workspace["run"]
        want_ua = next(line for line in (run / "summary.txt").read_text()
                       .splitlines() if line.startswith("ua "))
        capsys.readouterr()
        rc = main(["eval", "--checkpoint", str(run / "best.ckpt"),
                   "--dataset", str(workspace["dataset"]),
                   "--config", str(workspace["config"]), "--group", "1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert want_ua in out
        assert "(group 1)" in out

    def test_config_fallback_beside_checkpoint(self, workspace, capsys):
        run = workspace["run"]
        rc = main(["eval", "--checkpoint", str(run / "best.ckpt"),
                   "--dataset", str(workspace["dataset"]), "--group", "1"])
        assert rc == 0

    def test_empty_group_filter(self, workspace, capsys):
        run = workspace["run"]
        rc = main(["eval", "--checkpoint", str(run / "best.ckpt"),
                   "--dataset", str(workspace["dataset"]), "--group", "5"])
        assert rc == 2

    def test_garbage_checkpoint(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"JUNKJUNK")
        rc = main(["eval", "--checkpoint", str(bad),
                   "--dataset", str(workspace["dataset"]),
                   "--config", str(workspace["config"])])
        assert rc == 3
        assert "data error" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_blowup_exit_code(self, workspace, tmp_path, capsys):
        cfg = parse_config(workspace["config"])
        header = load_dataset(workspace["dataset"]).header
        model = FoalNet(_model_config(cfg, header))
        for _, p in model.named_parameters():
            p.data = np.full_like(p.data, 1e200)
        bomb = tmp_path / "bomb.ckpt"
        save_checkpoint(model, bomb)
        rc = main(["eval", "--checkpoint", str(bomb),
                   "--dataset", str(workspace["dataset"]),
                   "--config", str(workspace["config"])])
        assert rc == 4
        assert "numeric error" in capsys.readouterr().err


class TestXval:
    def test_ablation_grid(self, workspace, tmp_path, capsys):
        out_dir = tmp_path / "xval"
        cfg = write_config(tmp_path / "x.cfg", workspace["dataset"], out_dir,
                           epochs=1)
        assert main(["xval", "--config", str(cfg), "--ablation"]) == 0
        summary = (out_dir / "summary.txt").read_text()
        mean_rows = [line for line in summary.splitlines() if "mean" in line]
        assert len(mean_rows) == 4
        for name in ("Baseline", "+AVEL", "+MEM", "+AVEL+MEM"):
            assert any(line.startswith(name) for line in summary.splitlines())
        rows = [json.loads(line)
                for line in (out_dir / "metrics.ndjson").read_text().splitlines()]
        assert len(rows) == 4 * 2 * 1  # cells x folds x epochs
        assert {r["run_id"] for r in rows} == {"Baseline", "+AVEL", "+MEM",
                                               "+AVEL+MEM"}

    def test_plain_xval_single_row(self, workspace, tmp_path, capsys):
        out_dir = tmp_path / "xval"
        cfg = write_config(tmp_path / "x.cfg", workspace["dataset"], out_dir,
                           epochs=1)
        assert main(["xval", "--config", str(cfg)]) == 0
        summary = (out_dir / "summary.txt").read_text()
        assert sum(1 for line in summary.splitlines() if "mean" in line) == 1


class TestGradcheck:
    def test_reports_pass(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[-1] == "max relative error <= 1e-4: PASS"
        item_lines = [line for line in out[:-1] if "max rel err" in line]
        assert len(item_lines) >= 15
        assert all(line.endswith("ok") for line in item_lines)
        assert any(line.startswith("total_loss") for line in item_lines)
