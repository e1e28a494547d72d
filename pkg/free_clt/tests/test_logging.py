from __future__ import annotations

import logging
from pathlib import Path

import pytest

from freeclt import logging_setup
from freeclt.logging_setup import LOGGER_NAME, get_logger, setup_logging


@pytest.fixture
def fresh_logger(monkeypatch: pytest.MonkeyPatch):
    logger = logging.getLogger(LOGGER_NAME)
    saved = list(logger.handlers)
    monkeypatch.setattr(logging_setup, "_CONFIGURED", False)
    monkeypatch.setattr(logging_setup, "_RUN_ID", "-")
    for handler in saved:
        logger.removeHandler(handler)
    yield logger
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    for handler in saved:
        logger.addHandler(handler)


def test_setup_is_idempotent_and_writes_context(fresh_logger: logging.Logger, tmp_path: Path) -> None:
    setup_logging(tmp_path / "logs", level=logging.INFO)
    handlers = list(fresh_logger.handlers)
    setup_logging(tmp_path / "other", level=logging.DEBUG)
    assert fresh_logger.handlers == handlers
    assert not (tmp_path / "other").exists()

    get_logger("abc123").info("density_inverted", extra={"event_name": "density_inverted"})
    get_logger().warning("plain")
    for handler in fresh_logger.handlers:
        handler.flush()

    text = (tmp_path / "logs" / "freeclt.log").read_text(encoding="utf-8")
    assert "density_inverted run_id=abc123 event_name=density_inverted" in text
    assert "plain run_id=- event_name=-" in text


def test_stream_only_without_log_dir(fresh_logger: logging.Logger) -> None:
    setup_logging(None, level=logging.WARNING)
    assert len(fresh_logger.handlers) == 1
    assert fresh_logger.level == logging.WARNING
    assert fresh_logger.propagate is False


def test_run_id_applies_to_loggers_without_their_own(fresh_logger: logging.Logger, tmp_path: Path) -> None:
    setup_logging(tmp_path / "logs", level=logging.INFO)
    logging_setup.set_run_id("feed42")
    get_logger().info("rate_fit", extra={"event_name": "rate_fit"})
    get_logger("own").info("explicit")
    logging_setup.set_run_id(None)
    get_logger().info("after")
    for handler in fresh_logger.handlers:
        handler.flush()

    text = (tmp_path / "logs" / "freeclt.log").read_text(encoding="utf-8")
    assert "rate_fit run_id=feed42 event_name=rate_fit" in text
    assert "explicit run_id=own event_name=-" in text
    assert "after run_id=- event_name=-" in text
