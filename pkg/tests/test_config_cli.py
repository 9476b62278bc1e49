"""Run-config parsing and the command-line pipeline."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from mosbench.cli import main
from mosbench.config import RunConfig
from mosbench.errors import ConfigError

TINY_OVERRIDES = [
    "synth.num_systems=3",
    "synth.utterances_per_system=4",
    "synth.total_judges=6",
    "synth.judges_per_utterance=2",
    "synth.min_frames=6",
    "synth.max_frames=10",
    "split.train=8",
    "split.val=2",
    "split.test=2",
    "arch.mean_channels=2,2,2,2",
    "arch.bias_channels=2,2",
    "arch.recurrent_hidden=4",
    "arch.dense_hidden=4",
    "arch.dropout=0.0",
    "arch.judge_embedding_dim=3",
    "train.batch_size=8",
    "train.learning_rate=0.001",
    "train.epochs=2",
    "train.seeds=0",
]


def tiny_args(command: str, out: Path, extra: list[str] = ()) -> list[str]:
    args = [command, "--out", str(out)]
    for override in [*TINY_OVERRIDES, *extra]:
        args += ["--set", override]
    return args


class TestRunConfig:
    def test_defaults_resolve(self):
        cfg = RunConfig.default()
        assert cfg.train_config().learning_rate == 1e-4
        assert cfg.train_config().batch_size == 64
        assert cfg.synth_spec().num_systems == 12
        assert cfg.loss_config().tau == 0.5

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="train.momentum"):
            RunConfig.load(None, ["train.momentum=0.9"])

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="train.epochs"):
            RunConfig.load(None, ["train.epochs=many"])

    def test_bad_mode_rejected(self):
        with pytest.raises(ConfigError, match="eval.modes"):
            RunConfig.load(None, ["eval.modes=bias_only"])

    def test_file_parsing_with_comments(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# comment line\n\nloss.tau = 0.25\narch.dropout = 0.1\n", encoding="utf-8"
        )
        cfg = RunConfig.load(cfg_file)
        assert cfg.loss_config().tau == 0.25
        assert cfg.arch_config().dropout == 0.1

    def test_overrides_beat_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("train.epochs = 5\n", encoding="utf-8")
        cfg = RunConfig.load(cfg_file, ["train.epochs=7"])
        assert cfg.train_config().epochs == 7

    def test_snapshot_round_trips(self, tmp_path):
        cfg = RunConfig.load(None, ["loss.tau=0.75", "arch.mean_channels=4,4,4,4"])
        snapshot = cfg.write_snapshot(tmp_path / "resolved.txt")
        again = RunConfig.load(snapshot)
        assert again.values == cfg.values

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError, match="not found"):
            RunConfig.load(Path("/nonexistent/cfg.txt"))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("synth")
    assert main(tiny_args("synth", out)) == 0
    return out


def data_overrides(synth_dir: Path) -> list[str]:
    return [
        f"paths.manifest={synth_dir / 'manifest.csv'}",
        f"paths.cache_dir={synth_dir / 'spectrograms'}",
    ]


class TestCliSynth:
    def test_artifacts_exist(self, synth_dir):
        assert (synth_dir / "manifest.csv").exists()
        assert (synth_dir / "truth.json").exists()
        assert (synth_dir / "config_resolved.txt").exists()
        assert list((synth_dir / "spectrograms").glob("*.npy"))

    def test_manifest_row_count(self, synth_dir):
        lines = (synth_dir / "manifest.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 3 * 4 * 2  # header + systems*utterances*judges


class TestCliTrain:
    def test_run_directory_contents(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        assert main(tiny_args("train", out, data_overrides(synth_dir))) == 0
        assert (out / "history.csv").exists()
        assert (out / "config_resolved.txt").exists()
        assert (out / "checkpoints" / "best.pt").exists()
        assert (out / "checkpoints" / "epoch_001.pt").exists()
        assert (out / "checkpoints" / "epoch_002.pt").exists()

    def test_repeat_runs_identical_history(self, synth_dir, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(tiny_args("train", out1, data_overrides(synth_dir))) == 0
        assert main(tiny_args("train", out2, data_overrides(synth_dir))) == 0
        assert (out1 / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()
        assert (out1 / "config_resolved.txt").read_bytes() == \
               (out2 / "config_resolved.txt").read_bytes()

    def test_default_learning_rate_override_changes_nothing(self, synth_dir, tmp_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        base = data_overrides(synth_dir)
        assert main(tiny_args("train", out1, base)) == 0
        assert main(tiny_args("train", out2, base + ["train.learning_rate=1e-3"])) == 0
        # 1e-3 matches the tiny config's resolved default, so outputs agree
        assert (out1 / "history.csv").read_bytes() == (out2 / "history.csv").read_bytes()
        assert (out1 / "config_resolved.txt").read_bytes() == \
               (out2 / "config_resolved.txt").read_bytes()


@pytest.fixture(scope="module")
def trained_dir(synth_dir, tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("trained")
    assert main(tiny_args("train", out, data_overrides(synth_dir))) == 0
    return out


def checkpoint_overrides(synth_dir: Path, trained_dir: Path) -> list[str]:
    return data_overrides(synth_dir) + [
        f"paths.checkpoint={trained_dir / 'checkpoints' / 'best.pt'}",
    ]


class TestCliEvaluate:
    def test_reports_written_and_reproducible(self, synth_dir, trained_dir, tmp_path):
        extra = checkpoint_overrides(synth_dir, trained_dir) + [
            "eval.modes=mean_only,mean_plus_bias_correct_judges",
        ]
        out1, out2 = tmp_path / "e1", tmp_path / "e2"
        assert main(tiny_args("evaluate", out1, extra)) == 0
        assert main(tiny_args("evaluate", out2, extra)) == 0
        for name in ("report_mean_only.txt",
                     "report_mean_plus_bias_correct_judges.txt", "reports.csv"):
            assert (out1 / name).exists()
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_report_contents(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "e"
        assert main(tiny_args("evaluate", out, checkpoint_overrides(synth_dir, trained_dir))) == 0
        text = (out / "report_mean_only.txt").read_text()
        assert text.startswith("mode = mean_only")
        assert "system.srcc = " in text

    def test_missing_checkpoint_fails(self, synth_dir, tmp_path, capsys):
        extra = data_overrides(synth_dir) + ["paths.checkpoint=/nonexistent/best.pt"]
        assert main(tiny_args("evaluate", tmp_path / "e", extra)) == 2
        assert "checkpoint" in capsys.readouterr().err


class TestCliPredict:
    def test_prediction_csv(self, synth_dir, trained_dir, tmp_path):
        out = tmp_path / "p"
        assert main(tiny_args("predict", out, checkpoint_overrides(synth_dir, trained_dir))) == 0
        with open(out / "predictions.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 2  # test split size
        for row in rows:
            assert set(row) == {"audio_id", "system_id", "prediction"}
            assert np.isfinite(float(row["prediction"]))


class TestCliAblate:
    def test_tables_cover_all_variants_and_conditions(self, synth_dir, tmp_path):
        out = tmp_path / "ab"
        extra = data_overrides(synth_dir) + ["train.epochs=1", "train.seeds=0"]
        assert main(tiny_args("ablate", out, extra)) == 0
        with open(out / "ablation.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert [r["variant"] for r in rows] == [
            "full", "no_biasnet", "no_meannet", "no_cmse", "no_reppad"
        ]
        with open(out / "conditions.csv", newline="") as handle:
            condition_rows = list(csv.DictReader(handle))
        assert [r["mode"] for r in condition_rows] == [
            "mean_only", "mean_plus_bias_correct_judges", "mean_plus_bias_random_judges"
        ]


class TestCliErrors:
    def test_unknown_key_exits_nonzero_naming_key(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path / "x"), "--set", "train.momentum=0.9"])
        assert code == 2
        assert "train.momentum" in capsys.readouterr().err

    def test_missing_manifest_config_fails(self, tmp_path, capsys):
        code = main(tiny_args("train", tmp_path / "x"))
        assert code == 2
        assert "paths.manifest" in capsys.readouterr().err
