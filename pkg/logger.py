# logger.py

import logging
import os
import sys
from dataclasses import asdict, is_dataclass
from datetime import datetime

from tqdm import tqdm

from config import Config

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s (%(filename)s:%(lineno)d)"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

LEVEL_COLORS = {
    logging.DEBUG: "\x1b[38;20m",
    logging.INFO: "\x1b[38;20m",
    logging.WARNING: "\x1b[33;20m",
    logging.ERROR: "\x1b[31;20m",
    logging.CRITICAL: "\x1b[31;1m",
}
RESET = "\x1b[0m"


class TqdmLoggingHandler(logging.Handler):
    """Console handler that prints above running progress bars instead of through them."""

    def __init__(self, level=logging.NOTSET, stream=None):
        super().__init__(level)
        self.stream = stream

    def emit(self, record):
        try:
            tqdm.write(self.format(record), file=self.stream or sys.stderr)
        except Exception:
            self.handleError(record)


class CustomFormatter(logging.Formatter):
    """Per-level colored formatter; plain text when ``use_color`` is off."""

    def __init__(self, fmt=LOG_FORMAT, use_color=True):
        super().__init__(fmt)
        self.formatters = {
            level: logging.Formatter(f"{color}{fmt}{RESET}" if use_color else fmt)
            for level, color in LEVEL_COLORS.items()
        }

    def format(self, record):
        formatter = self.formatters.get(record.levelno)
        return formatter.format(record) if formatter else super().format(record)


def wants_color(stream=None):
    if os.getenv("NO_COLOR"):
        return False
    stream = stream or sys.stderr
    return hasattr(stream, "isatty") and stream.isatty()


def setup_logger(name, log_file=None, level="INFO"):
    """
    Set up a named logger writing through tqdm and, optionally, to a plain-text file.

    Calling it again for a configured name returns the existing logger unchanged.

    :param name: Logger name
    :param log_file: Optional path of the file log; its directory is created
    :param level: Level name or number
    :return: logging.Logger
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logger.setLevel(level if isinstance(level, int) else logging.INFO)

    console = TqdmLoggingHandler()
    console.setFormatter(CustomFormatter(use_color=wants_color()))
    logger.addHandler(console)

    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        logger.addHandler(file_handler)

    return logger


def log_config(title, config, level=logging.INFO):
    """Log a config dataclass one ``key=value`` per line under a title."""
    values = asdict(config) if is_dataclass(config) else dict(config)
    lines = "\n".join(f"  {key}={value}" for key, value in values.items())
    logger.log(level, f"{title}:\n{lines}")


log_file = Config.get_log_file("titan", datetime.now().strftime("%Y%m%d_%H%M%S"))
logger = setup_logger("titan", log_file, Config.LOG_LEVEL)
