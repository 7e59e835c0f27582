import json
import logging

import pytest

from src.utils.exceptions import (
    ArtifactIOError,
    DomainError,
    NotSettledError,
    OracleToleranceError,
    ScenarioValidationError,
    SimulationDivergenceError,
    log_and_raise,
)
from src.utils.logging import LoggingConfig, get_logger


def test_json_events_go_to_stderr(capsys):
    LoggingConfig.configure_logging(level="INFO", log_format="json")
    get_logger("tests.logging").info("loop_settled", delta_v=2.0)
    lines = [line for line in capsys.readouterr().err.splitlines() if "loop_settled" in line]
    event = json.loads(lines[-1])
    assert event["event"] == "loop_settled"
    assert event["delta_v"] == 2.0
    assert event["level"] == "info"
    assert event["logger"] == "tests.logging"


def test_level_filtering_and_runtime_change(capsys):
    LoggingConfig.configure_logging(level="WARNING")
    log = get_logger("tests.logging")
    log.info("hidden_event")
    assert "hidden_event" not in capsys.readouterr().err
    LoggingConfig.set_log_level("debug")
    assert logging.getLogger().level == logging.DEBUG
    log.debug("shown_event")
    assert "shown_event" in capsys.readouterr().err


def test_log_file_is_written(tmp_path):
    path = tmp_path / "logs" / "disep.log"
    LoggingConfig.configure_logging(level="INFO", log_file=str(path))
    get_logger("tests.logging").info("to_file")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "to_file" in path.read_text(encoding="utf-8")
    LoggingConfig.configure_logging(level="INFO")


def test_invalid_level():
    with pytest.raises(ValueError):
        LoggingConfig.set_log_level("LOUD")


@pytest.mark.parametrize(
    "exc, code",
    [
        (DomainError("x"), 1),
        (ScenarioValidationError("x"), 2),
        (NotSettledError("x"), 3),
        (ArtifactIOError("x"), 4),
        (OracleToleranceError("x"), 5),
        (SimulationDivergenceError("x"), 6),
    ],
)
def test_exit_codes(exc, code):
    assert exc.code == code


def test_validation_error_carries_location():
    exc = ScenarioValidationError("must be > 0", field="converter.f_out", line=7)
    assert exc.field == "converter.f_out"
    assert exc.line == 7
    assert "converter.f_out (line 7): must be > 0" in str(exc)


def test_log_and_raise():
    with pytest.raises(OracleToleranceError) as info:
        log_and_raise(OracleToleranceError("breach", draw={"c": 1e-3}))
    assert info.value.draw == {"c": 1e-3}
