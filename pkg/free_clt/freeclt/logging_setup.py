from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

_CONFIGURED = False
_RUN_ID = "-"

LOGGER_NAME = "freeclt"


class _DefaultFieldsFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        if getattr(record, "run_id", None) is None:
            record.run_id = _RUN_ID
        if not hasattr(record, "event_name"):
            record.event_name = "-"
        return True


def setup_logging(log_dir: Path | None = None, level: int = logging.INFO) -> None:
    """Configure library logging (idempotent).

    Installs a stderr stream handler on the ``freeclt`` logger and, when ``log_dir`` is
    given, a rotating file handler writing ``freeclt.log`` (2 MB per file, 5 backups, UTF-8).
    Both handlers share one formatter and a filter that guarantees ``run_id`` and
    ``event_name`` on every record (defaulting to ``"-"``).

    Standard output is never used: CLI data goes there and must stay byte-identical across
    runs.

    Args:
        log_dir: Directory for the log file. No file handler is installed when omitted.
        level: Level applied to the ``freeclt`` logger and its handlers.
    """
    global _CONFIGURED
    if _CONFIGURED:
        return

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    logger.propagate = False

    fmt = logging.Formatter(
        fmt="%(asctime)s %(levelname)s %(name)s %(message)s run_id=%(run_id)s event_name=%(event_name)s",
    )

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_dir / "freeclt.log", maxBytes=2_000_000, backupCount=5, encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(fmt)
        file_handler.addFilter(_DefaultFieldsFilter())
        logger.addHandler(file_handler)

    stream_handler = logging.StreamHandler()
    stream_handler.setLevel(level)
    stream_handler.setFormatter(fmt)
    stream_handler.addFilter(_DefaultFieldsFilter())
    logger.addHandler(stream_handler)

    _CONFIGURED = True


class _ContextAdapter(logging.LoggerAdapter):
    def process(self, msg, kwargs):
        extra = kwargs.setdefault("extra", {})
        if self.extra.get("run_id") is not None:
            extra.setdefault("run_id", self.extra["run_id"])
        extra.setdefault("event_name", self.extra.get("event_name", "-"))
        return msg, kwargs


def get_logger(run_id: str | None = None) -> logging.LoggerAdapter:
    """Adapter stamping ``run_id`` on records; without one the id set by ``set_run_id`` applies."""
    return _ContextAdapter(logging.getLogger(LOGGER_NAME), {"run_id": run_id})


def set_run_id(run_id: str | None) -> None:
    """Process-wide run id for records logged without their own, e.g. from worker threads."""
    global _RUN_ID
    _RUN_ID = run_id or "-"
