"""
Tests for the loopx command-line surface
"""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from app.cli.commands import cli
from app.core.checkpoint import save_checkpoint
from app.core.png_io import read_png
from app.models.params import ModelDims
from app.services.correction_model import init_identity
from app.services.data_service import FUSED_NAME
from app.services.fusion_service import FusionService

DIMS = ModelDims(curve_knots=8, lut_count=2, lut_size=5)


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args, **kwargs):
    return runner.invoke(cli, ["--threads", "1", "--log-level", "ERROR", *map(str, args)], **kwargs)


@pytest.fixture
def dataset(runner, tmp_path):
    root = tmp_path / "data"
    result = invoke(runner, "synth", "--out", root, "--scenes", 2, "--size", "24x24", "--evs", "-1,0,1")
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture
def identity_ckpt(tmp_path):
    return save_checkpoint(tmp_path / "identity.lx", init_identity(DIMS))


def write_config(path, data_root, output_root):
    path.write_text(
        json.dumps(
            {
                "data_root": str(data_root),
                "output_root": str(output_root),
                "seed": 3,
                "holdout_fraction": 0.5,
                "train": {"warmup_epochs": 2, "joint_rounds": 1, "epochs_per_round": 1},
                "model": DIMS.model_dump(),
            }
        )
    )
    return path


class TestSynth:
    def test_byte_identical(self, runner, tmp_path):
        """Test that two runs with the same seed write the same bytes"""
        for name in ("a", "b"):
            result = invoke(runner, "synth", "--out", tmp_path / name, "--scenes", 2, "--size", "16x16")
            assert result.exit_code == 0, result.output
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_custom_evs(self, runner, tmp_path):
        """Test that an explicit EV list controls the files per scene"""
        result = invoke(
            runner, "synth", "--out", tmp_path, "--scenes", 1, "--size", "16x16", "--evs", "-1.5,0,1.5"
        )
        assert result.exit_code == 0, result.output
        names = sorted(p.name for p in (tmp_path / "scene_0000").iterdir())
        assert names == ["ev_+0.00.png", "ev_+1.50.png", "ev_-1.50.png", "gt.png"]
        assert "0000 -1.50,+0.00,+1.50" in result.output

    def test_bad_ev_token(self, runner, tmp_path):
        """Test that a non-numeric EV is a usage error naming the token"""
        result = invoke(runner, "synth", "--out", tmp_path, "--evs", "-1,abc,1")
        assert result.exit_code == 2
        assert "abc" in result.output

    def test_decreasing_evs(self, runner, tmp_path):
        """Test that a decreasing EV list is a usage error"""
        result = invoke(runner, "synth", "--out", tmp_path, "--evs", "1,0")
        assert result.exit_code == 2

    def test_colliding_evs(self, runner, tmp_path):
        """Test that EVs sharing a file name exit with the validation code and write nothing"""
        result = invoke(runner, "synth", "--out", tmp_path / "d", "--scenes", 1, "--evs", "0.001,0.004")
        assert result.exit_code == 2
        assert not (tmp_path / "d").exists()

    def test_threads_env_rejected(self, runner, tmp_path):
        """Test that LOOPX_THREADS=0 exits with the validation code"""
        result = runner.invoke(cli, ["synth", "--out", str(tmp_path)], env={"LOOPX_THREADS": "0"})
        assert result.exit_code == 2


class TestTrain:
    def test_writes_checkpoints(self, runner, dataset, tmp_path):
        """Test that train leaves checkpoints and the run-log in output_root"""
        out = tmp_path / "run"
        config = write_config(tmp_path / "run.json", dataset, out)
        result = invoke(runner, "train", "--config", config)
        assert result.exit_code == 0, result.output
        assert (out / "ckpt_warmup.lx").is_file()
        assert (out / "ckpt_round_1.lx").is_file()
        assert (out / "run_log.csv").read_text().startswith("phase,round,epoch,mean_loss,lr,drift")
        assert "round 1:" in result.output

    def test_bad_config(self, runner, dataset, tmp_path):
        """Test that an unknown config key exits with the validation code"""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"data_root": str(dataset), "output_root": "x", "nope": 1}))
        result = invoke(runner, "train", "--config", config)
        assert result.exit_code == 2
        assert "error:" in result.output


class TestCorrect:
    def test_identity_matches_fusion(self, runner, dataset, identity_ckpt, tmp_path):
        """Test that identity correction of a folder reproduces plain fusion"""
        scene = dataset / "scene_0000"
        out = tmp_path / "corrected"
        result = invoke(runner, "correct", "--ckpt", identity_ckpt, "--in", scene, "--out", out)
        assert result.exit_code == 0, result.output
        inputs = [read_png(scene / f"ev_{ev}.png") for ev in ("-1.00", "+0.00", "+1.00")]
        for ev, img in zip(("-1.00", "+0.00", "+1.00"), inputs):
            np.testing.assert_allclose(read_png(out / f"ev_{ev}.png"), img, atol=2.0 / 65535)
        fused = read_png(out / FUSED_NAME)
        np.testing.assert_allclose(fused, FusionService().fuse(inputs), atol=2.0 / 65535)

    def test_single_image(self, runner, dataset, identity_ckpt, tmp_path):
        """Test that a one-image folder gets no fused output"""
        single = tmp_path / "single"
        single.mkdir()
        (single / "photo.png").write_bytes((dataset / "scene_0000" / "ev_+0.00.png").read_bytes())
        out = tmp_path / "out"
        result = invoke(runner, "correct", "--ckpt", identity_ckpt, "--in", single, "--out", out)
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in out.iterdir()) == ["photo.png"]

    def test_output_inside_input(self, runner, dataset, identity_ckpt):
        """Test that writing into the input folder is refused"""
        scene = dataset / "scene_0000"
        result = invoke(runner, "correct", "--ckpt", identity_ckpt, "--in", scene, "--out", scene / "out")
        assert result.exit_code == 2

    def test_bad_checkpoint(self, runner, dataset, tmp_path):
        """Test that a corrupt checkpoint exits with the validation code"""
        ckpt = tmp_path / "broken.lx"
        ckpt.write_bytes(b"not a checkpoint")
        result = invoke(
            runner, "correct", "--ckpt", ckpt, "--in", dataset / "scene_0000", "--out", tmp_path / "o"
        )
        assert result.exit_code == 2


class TestFuse:
    def test_writes_png(self, runner, dataset, tmp_path):
        """Test that fuse writes a single image of the input size"""
        out = tmp_path / "fused.png"
        result = invoke(runner, "fuse", "--in", dataset / "scene_0001", "--out", out)
        assert result.exit_code == 0, result.output
        assert read_png(out).shape == (24, 24, 3)


class TestEvalAndAblate:
    def test_eval_report(self, runner, dataset, identity_ckpt, tmp_path):
        """Test one SEC row per scene and EV plus the aligned table"""
        report = tmp_path / "eval.csv"
        result = invoke(runner, "eval", "--ckpt", identity_ckpt, "--data", dataset, "--report", report)
        assert result.exit_code == 0, result.output
        lines = report.read_text().splitlines()
        assert sum(line.startswith("sec,") for line in lines) == 2 * 3
        assert sum(line.startswith("mef,") for line in lines) == 2 * 2
        assert (tmp_path / "eval.txt").is_file()

    def test_eval_missing_data(self, runner, identity_ckpt, tmp_path):
        """Test that a folder without manifest exits with the validation code"""
        (tmp_path / "empty").mkdir()
        report = tmp_path / "r.csv"
        result = invoke(
            runner, "eval", "--ckpt", identity_ckpt, "--data", tmp_path / "empty", "--report", report
        )
        assert result.exit_code == 2

    def test_eval_txt_report(self, runner, dataset, identity_ckpt, tmp_path):
        """Test that a .txt report path exits with the validation code"""
        report = tmp_path / "eval.txt"
        result = invoke(runner, "eval", "--ckpt", identity_ckpt, "--data", dataset, "--report", report)
        assert result.exit_code == 2
        assert not report.exists()

    def test_ablate(self, runner, dataset, tmp_path):
        """Test that ablate writes one row per setting plus the baseline"""
        config = write_config(tmp_path / "run.json", dataset, tmp_path / "runs")
        report = tmp_path / "ablation.csv"
        result = invoke(runner, "ablate", "--config", config, "--report", report)
        assert result.exit_code == 0, result.output
        settings = [line.split(",")[0] for line in report.read_text().splitlines()[1:]]
        assert settings == ["identity", "warmup_only", "joint_only", "full", "full_no_lumi", "mertens"]
