import os
import sys
from pathlib import Path
from typing import Optional

from loguru import logger

from src.config.config import config

LOG_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level} | "
    "{module}:{function}:{line} - {message} | {extra}"
)

_console_sink: Optional[int] = None


def _add_console(level: str) -> int:
    return logger.add(
        sys.stderr,
        format=LOG_FORMAT,
        level=level.upper(),
        backtrace=True,
        diagnose=False,
        colorize=True,
    )


def configure_logger(
    env: str = "development",
    console_level: Optional[str] = None,
    file_level: str = "DEBUG",
    error_file_level: str = "ERROR",
    log_dir: str = "logs",
) -> None:
    """
    Configure Loguru with a console sink and rotating file sinks under `log_dir`.

    File sinks are enqueued: synthesis, pre-processing and NNLS fits log from
    worker threads.

    Args:
        env: "development" logs DEBUG to the console, anything else INFO.
        console_level: Overrides the env-based console level.
        file_level: Level of app.log.
        error_file_level: Level of error.log.
        log_dir: Directory receiving the log files.
    """
    global _console_sink
    logger.remove()

    default_console_level = "DEBUG" if env.lower() == "development" else "INFO"
    console_level = console_level or default_console_level
    _console_sink = _add_console(console_level)

    log_path = Path(log_dir)
    log_path.mkdir(parents=True, exist_ok=True)
    for name, level, rotation, retention in (
        ("app.log", file_level, "10 MB", "7 days"),
        ("error.log", error_file_level, "5 MB", "30 days"),
    ):
        logger.add(
            log_path / name,
            format=LOG_FORMAT,
            level=level.upper(),
            rotation=rotation,
            retention=retention,
            compression="zip",
            enqueue=True,
            backtrace=True,
            diagnose=False,
        )

    logger.debug(
        f"Logger configured for {env} environment",
        console_level=console_level,
        file_level=file_level,
        log_dir=str(log_path),
    )


def set_console_level(level: str) -> None:
    """Replace the console sink's level, e.g. for `mrsquant --log-level WARNING`."""
    global _console_sink
    if _console_sink is not None:
        logger.remove(_console_sink)
    _console_sink = _add_console(level)


configure_logger(
    env=config.ENV,
    console_level=os.getenv("CONSOLE_LOG_LEVEL"),
    file_level=os.getenv("FILE_LOG_LEVEL", "DEBUG"),
    error_file_level=os.getenv("ERROR_LOG_LEVEL", "ERROR"),
    log_dir=config.LOG_DIR,
)

log = logger
