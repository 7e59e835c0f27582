# src/utils/logging.py

import logging
import logging.handlers
import os
from typing import Optional

import structlog


class LoggingConfig:
    """
    Configures structured logging for the toolkit.

    Events are rendered as JSON lines (default) or human-readable console
    output through structlog, on top of the stdlib logging handlers so that
    third-party library records end up in the same stream.
    """

    DEFAULT_LOG_LEVEL = "INFO"
    LOG_FILE_MAX_BYTES = int(os.getenv("DISEP_LOG_FILE_MAX_BYTES", 10 * 1024 * 1024))  # 10 MB
    LOG_FILE_BACKUP_COUNT = int(os.getenv("DISEP_LOG_FILE_BACKUP_COUNT", 5))

    @staticmethod
    def configure_logging(
        level: str = DEFAULT_LOG_LEVEL,
        log_format: str = "json",
        log_file: Optional[str] = None,
    ) -> None:
        """
        Configures the logging system.

        Args:
            level (str): Minimum level name (DEBUG, INFO, WARNING, ERROR, CRITICAL).
            log_format (str): "json" or "console".
            log_file (Optional[str]): Optional path of a rotating log file.
        """
        numeric_level = LoggingConfig._numeric_level(level)

        shared_processors = [
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso"),
        ]
        if log_format == "console":
            renderer = structlog.dev.ConsoleRenderer(colors=False)
        else:
            renderer = structlog.processors.JSONRenderer(sort_keys=True)

        formatter = structlog.stdlib.ProcessorFormatter(
            foreign_pre_chain=shared_processors,
            processors=[
                structlog.stdlib.ProcessorFormatter.remove_processors_meta,
                structlog.processors.format_exc_info,
                renderer,
            ],
        )

        root_logger = logging.getLogger()
        root_logger.handlers.clear()
        root_logger.setLevel(numeric_level)

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=LoggingConfig.LOG_FILE_MAX_BYTES,
                backupCount=LoggingConfig.LOG_FILE_BACKUP_COUNT,
            )
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)

        structlog.configure(
            processors=shared_processors + [structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
            logger_factory=structlog.stdlib.LoggerFactory(),
            wrapper_class=structlog.stdlib.BoundLogger,
            cache_logger_on_first_use=False,
        )
        structlog.get_logger(__name__).debug("logging_configured", level=level, format=log_format)

    @staticmethod
    def set_log_level(level: str) -> None:
        """
        Dynamically sets the log level of the root logger.

        Args:
            level (str): The level name to set.
        """
        logging.getLogger().setLevel(LoggingConfig._numeric_level(level))

    @staticmethod
    def _numeric_level(level: str) -> int:
        numeric_level = getattr(logging, level.upper(), None)
        if not isinstance(numeric_level, int):
            raise ValueError(f"Invalid log level: {level}")
        return numeric_level


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """
    Retrieves a structured logger with the specified name.

    Args:
        name (str): The name of the logger.

    Returns:
        structlog.stdlib.BoundLogger: Logger bound to ``name``.
    """
    return structlog.get_logger(name)
