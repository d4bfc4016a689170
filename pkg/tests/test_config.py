"""
Tests for settings, run configuration and logging setup
"""

import json
import logging

import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigError
from app.core.logging_config import configure_logging
from app.models.run_config import load_run_config


class TestSettings:
    def test_threads_from_env(self, monkeypatch):
        """Test that LOOPX_THREADS is read"""
        monkeypatch.setenv("LOOPX_THREADS", "3")
        assert Settings().resolved_threads() == 3

    def test_override_wins(self, monkeypatch):
        """Test that an explicit --threads beats the environment"""
        monkeypatch.setenv("LOOPX_THREADS", "3")
        assert Settings().resolved_threads(2) == 2

    def test_empty_env_is_unset(self, monkeypatch):
        """Test that an empty LOOPX_THREADS falls back to the default"""
        monkeypatch.setenv("LOOPX_THREADS", "")
        assert 1 <= Settings().resolved_threads() <= 4

    def test_rejects_zero(self, monkeypatch):
        """Test that zero threads is invalid"""
        monkeypatch.setenv("LOOPX_THREADS", "0")
        with pytest.raises(ValueError):
            Settings()


class TestRunConfig:
    def write(self, tmp_path, payload):
        path = tmp_path / "run.json"
        path.write_text(json.dumps(payload))
        return path

    def test_defaults(self, tmp_path):
        """Test a minimal config picks up every section default"""
        path = self.write(tmp_path, {"data_root": str(tmp_path), "output_root": str(tmp_path / "out")})
        run = load_run_config(path)
        assert run.train.warmup_epochs == 30
        assert run.loss.w_p == 0.1
        assert run.model.lut_size == 9
        assert run.fusion.sigma_well == 0.2

    def test_seed_override(self, tmp_path):
        """Test that a top-level seed replaces train.seed"""
        path = self.write(
            tmp_path,
            {"data_root": str(tmp_path), "output_root": "out", "seed": 9, "train": {"seed": 1}},
        )
        assert load_run_config(path).effective_train.seed == 9

    def test_unknown_key(self, tmp_path):
        """Test that unknown keys are rejected"""
        path = self.write(
            tmp_path, {"data_root": str(tmp_path), "output_root": "out", "train": {"epochs": 3}}
        )
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_missing_data_root(self, tmp_path):
        """Test that a data_root that does not exist is rejected at parse time"""
        path = self.write(tmp_path, {"data_root": str(tmp_path / "nope"), "output_root": "out"})
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_unreadable(self, tmp_path):
        """Test that a missing file is a config error"""
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.json")


class TestLogging:
    def test_json_renderer(self, capsys):
        """Test that json format emits one JSON object per record on stderr"""
        configure_logging("INFO", "json")
        logging.getLogger("app.test").info("hello")
        line = capsys.readouterr().err.strip().splitlines()[-1]
        record = json.loads(line)
        assert record["event"] == "hello"
        assert record["level"] == "info"
        assert record["logger"] == "app.test"
