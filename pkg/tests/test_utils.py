"""
Configuration merging, exit codes and canonical JSON.
"""
import json
from pathlib import Path

import numpy as np
import pytest
from loguru import logger
from pydantic import ValidationError

from src.segmodel import SegModelConfig
from src.utils.cli import load_config_file, section
from src.utils.config import load_run_config, merge_overrides
from src.utils.errors import (
    ConfigError,
    DataError,
    DivergenceError,
    EmptyBandError,
    NonFiniteError,
    UnderSampledBinError,
    exit_code_for,
    format_error_line,
)
from src.utils.json_utils import config_hash, dumps, header_fields
from src.utils.logging import setup_logging


class TestConfig:
    def test_nested_merge_keeps_defaults(self):
        base = {"train": {"epochs": 5, "alpha": 1.0}, "eval": {"threshold": 0.5}}
        merged = merge_overrides(base, {"train": {"epochs": 1}})
        assert merged == {"train": {"epochs": 1, "alpha": 1.0}, "eval": {"threshold": 0.5}}
        assert base["train"]["epochs"] == 5

    def test_override_file(self, tmp_path):
        path = tmp_path / "override.yaml"
        path.write_text("train:\n  alpha: 0.8\n")
        run_config = load_run_config(path)
        assert run_config["train"]["alpha"] == 0.8
        assert run_config["train"]["group_size"] == 15
        assert run_config["bins"]["edges"][-1] == 1.0

    def test_defaults_build_valid_models(self):
        assert SegModelConfig(**section(load_run_config(), "model")).input_side == 32

    def test_missing_file_and_section(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "absent.yaml")
        with pytest.raises(ConfigError):
            section({"train": {}}, "model")


class TestErrors:
    @pytest.mark.parametrize(
        "exc, code",
        [
            (ConfigError("x"), 2),
            (DataError("x"), 3),
            (EmptyBandError("x"), 3),
            (UnderSampledBinError([3, 1], 2), 3),
            (DivergenceError("x"), 4),
            (NonFiniteError("x"), 1),
            (RuntimeError("x"), 1),
        ],
    )
    def test_exit_codes(self, exc, code):
        assert exit_code_for(exc) == code

    def test_validation_errors_are_config_errors(self):
        with pytest.raises(ValidationError) as info:
            SegModelConfig(base_width=0)
        assert exit_code_for(info.value) == 2

    def test_error_line(self):
        line = format_error_line(DataError('bad "table"\nrow'))
        assert line == "error code=3 kind=DataError message=\"bad 'table' row\""

    def test_under_sampled_bins_are_sorted(self):
        assert UnderSampledBinError([3, 1], 2).bins == [1, 3]


class TestJSON:
    def test_numpy_and_paths(self):
        text = dumps({"b": np.float64(0.5), "a": np.arange(2), "p": Path("x/y"), "n": np.int64(3)})
        assert json.loads(text) == {"a": [0, 1], "b": 0.5, "n": 3, "p": "x/y"}
        assert text.index('"a"') < text.index('"b"')

    def test_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
        assert len(config_hash({})) == 12

    def test_hash_of_pydantic_models(self):
        assert config_hash(SegModelConfig()) == config_hash(SegModelConfig().model_dump(mode="json"))

    def test_header_fields(self):
        fields = header_fields("abc", 7, split="val")
        assert list(fields)[:4] == ["tool", "version", "config_hash", "seed"]
        assert fields["tool"] == "lsrlab"
        assert fields["split"] == "val"


class TestLogging:
    @pytest.fixture
    def log_file(self, tmp_path, mocker):
        path = tmp_path / "logs" / "run.log"
        mocker.patch.dict("src.utils.logging.config", {"logging": {"level": "INFO", "log_file": str(path), "rotate": False}})
        yield path
        logger.remove()

    def test_records_carry_the_command(self, log_file, capsys):
        setup_logging(command="train")
        logger.info("epoch done")
        logger.debug("hidden")
        logger.remove()
        text = log_file.read_text()
        assert "| train |" in text and "epoch done" in text
        assert "hidden" not in text
        assert "epoch done" in capsys.readouterr().err

    def test_level_override(self, log_file):
        setup_logging(command="eval", level="debug")
        logger.debug("shown")
        logger.remove()
        assert "shown" in log_file.read_text()
