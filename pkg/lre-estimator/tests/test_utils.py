"""
Unit tests for the shared utilities.

This module tests the logging helpers, YAML configuration loading and
precedence rules, and the attributes carried by the error classes.
"""

import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import pytest

from utils.config import (
    DEFAULT_OUTPUT_DIR,
    OUTPUT_DIR_ENV,
    get_section,
    load_config,
    merge_settings,
    resolve_output_dir,
)
from utils.errors import (
    CheckpointError,
    CsvParseError,
    DatasetValidationError,
    LreError,
    RankError,
    SchemaError,
    UsageError,
)
from utils.logging import LOG_FILE_NAME, get_logger, log_action, setup_logging

# Test constants
STUDY_YAML = "study:\n  replications: 20\noutput:\n  directory: from_config\n"


class TestLoggingUtils(unittest.TestCase):
    """Test cases for logging utilities."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.log_dir = Path(self.tmp.name) / "logs"

    def tearDown(self):
        logging.shutdown()
        self.tmp.cleanup()

    def test_get_logger_returns_logger(self):
        """Test that get_logger returns a named logger instance."""
        logger = get_logger("test_module")

        assert isinstance(logger, logging.Logger)
        assert logger.name == "test_module"

    def test_logger_hierarchy(self):
        """Test that loggers follow Python's hierarchy."""
        parent_logger = get_logger("lmm")
        child_logger = get_logger("lmm.fit")

        assert child_logger.parent is parent_logger

    @patch("utils.logging.logging.basicConfig")
    def test_setup_logging_dev_environment(self, mock_basic_config):
        """Test that dev logs at DEBUG to the file and the console."""
        setup_logging("dev", self.log_dir)

        mock_basic_config.assert_called_once()
        call_args = mock_basic_config.call_args[1]
        assert call_args["level"] == logging.DEBUG
        assert len(call_args["handlers"]) == 3
        assert call_args["force"] is True
        call_args["handlers"][0].close()

    @patch("utils.logging.logging.basicConfig")
    def test_setup_logging_prod_environment(self, mock_basic_config):
        """Test that prod logs at INFO to the file only."""
        setup_logging("prod", self.log_dir)

        call_args = mock_basic_config.call_args[1]
        assert call_args["level"] == logging.INFO
        assert len(call_args["handlers"]) == 1
        for handler in call_args["handlers"]:
            handler.close()

    @patch("utils.logging.logging.basicConfig")
    def test_setup_logging_creates_log_file(self, mock_basic_config):
        """Test that the log directory and file are created."""
        setup_logging("prod", self.log_dir)

        assert (self.log_dir / LOG_FILE_NAME).exists()
        for handler in mock_basic_config.call_args[1]["handlers"]:
            handler.close()

    def test_log_action_passes_result_through(self):
        """Test that a decorated function returns its value."""

        @log_action("doubling")
        def double(value):
            return 2 * value

        assert double(4) == 8
        assert double.__name__ == "double"

    def test_log_action_logs_and_reraises(self):
        """Test that failures are logged with the action name and re-raised."""

        @log_action("failing fit")
        def fail():
            raise UsageError("bad option")

        with self.assertLogs(__name__, level="ERROR") as logs, pytest.raises(UsageError):
            fail()

        assert "failing fit failed: bad option" in logs.output[0]


class TestLoadConfig(unittest.TestCase):
    """Test cases for YAML configuration loading."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, text: str) -> Path:
        path = self.dir / "lre.yml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_loads_sections(self):
        """Test that a valid file is read into nested mappings."""
        config = load_config(self._write(STUDY_YAML))

        assert get_section(config, "study") == {"replications": 20}

    def test_empty_file_is_empty_config(self):
        """Test that an empty file means built-in defaults."""
        assert load_config(self._write("")) == {}

    def test_missing_explicit_path(self):
        """Test that an explicit path must exist."""
        with pytest.raises(UsageError):
            load_config(self.dir / "absent.yml")

    def test_invalid_yaml(self):
        """Test that unparsable YAML is a schema error."""
        with pytest.raises(SchemaError):
            load_config(self._write("study: [unclosed\n"))

    def test_top_level_must_be_mapping(self):
        """Test that a list at top level is rejected."""
        with pytest.raises(SchemaError):
            load_config(self._write("- study\n- fit\n"))

    def test_unknown_section(self):
        """Test that a misspelt section name is rejected."""
        with pytest.raises(SchemaError) as info:
            load_config(self._write("studdy:\n  replications: 5\n"))

        assert "studdy" in str(info.value)

    def test_section_must_be_mapping(self):
        """Test that a scalar section is a schema error."""
        with pytest.raises(SchemaError):
            get_section({"study": 5}, "study")

    def test_absent_section_is_empty(self):
        """Test that a missing or null section reads as empty."""
        assert get_section({}, "study") == {}
        assert get_section({"study": None}, "study") == {}


class TestSettingsPrecedence(unittest.TestCase):
    """Test cases for flag, environment and config precedence."""

    def test_output_dir_flag_wins(self):
        """Test that --out beats the environment and the config."""
        config = {"output": {"directory": "from_config"}}
        with patch.dict(os.environ, {OUTPUT_DIR_ENV: "from_env"}):
            assert resolve_output_dir("from_flag", config) == Path("from_flag")
            assert resolve_output_dir(None, config) == Path("from_env")

    def test_output_dir_config_then_default(self):
        """Test the config value and then the built-in default."""
        with patch.dict(os.environ, clear=True):
            assert resolve_output_dir(None, {"output": {"directory": "x"}}) == Path("x")
            assert resolve_output_dir(None, {}) == Path(DEFAULT_OUTPUT_DIR)

    def test_merge_settings_layers(self):
        """Test defaults < section < overrides, with None meaning not given."""
        merged = merge_settings(
            {"J": 100, "seed": 1, "scenario": 1},
            {"J": 50, "seed": 2},
            {"J": None, "seed": 3},
        )

        assert merged == {"J": 50, "seed": 3, "scenario": 1}

    def test_merge_settings_unknown_key(self):
        """Test that a config key without a default is rejected."""
        with pytest.raises(SchemaError):
            merge_settings({"J": 100}, {"sites": 50}, {})


class TestErrors(unittest.TestCase):
    """Test cases for the error hierarchy."""

    def test_all_derive_from_base(self):
        """Test that every error is an LreError."""
        for error in (
            CsvParseError("x"),
            DatasetValidationError("x"),
            SchemaError("x"),
            RankError("x"),
            UsageError("x"),
            CheckpointError("x", cell="c"),
        ):
            assert isinstance(error, LreError)

    def test_attributes(self):
        """Test the location details carried by errors."""
        assert CsvParseError("bad row", line=7).line == 7
        assert DatasetValidationError("one arm", site_id="S3").site_id == "S3"
        assert RankError("collinear", columns=("w2",)).columns == ("w2",)
        assert CheckpointError("corrupt", cell="s1_psi0.1").cell == "s1_psi0.1"
