import io
import logging

from logger import CustomFormatter, TqdmLoggingHandler, log_config, setup_logger
from pipeline import SyntheticSceneConfig


def record(level, message="hello"):
    return logging.LogRecord("titan", level, __file__, 1, message, None, None)


def test_formatter_colors_by_level():
    formatter = CustomFormatter()
    assert formatter.format(record(logging.WARNING)).startswith("\x1b[33;20m")
    assert formatter.format(record(logging.ERROR)).endswith("\x1b[0m")

    plain = CustomFormatter(use_color=False).format(record(logging.WARNING))
    assert "\x1b" not in plain
    assert "WARNING - hello" in plain


def test_handler_writes_to_its_stream():
    stream = io.StringIO()
    handler = TqdmLoggingHandler(stream=stream)
    handler.setFormatter(CustomFormatter(fmt="%(levelname)s %(message)s", use_color=False))
    handler.emit(record(logging.INFO, "step 10"))
    assert stream.getvalue() == "INFO step 10\n"


def test_setup_logger_writes_a_file_once(tmp_path):
    path = tmp_path / "logs" / "run.log"
    logger = setup_logger("titan.test_file", str(path), "debug")
    assert logger.level == logging.DEBUG
    assert setup_logger("titan.test_file", str(path)) is logger
    assert len(logger.handlers) == 2

    logger.debug("written")
    for handler in logger.handlers:
        handler.flush()
    assert "DEBUG - written" in path.read_text()


def test_log_config_lists_every_field(caplog):
    with caplog.at_level(logging.INFO, logger="titan"):
        log_config("Scene config", SyntheticSceneConfig(beams=16))
    assert "Scene config:" in caplog.text
    assert "  beams=16" in caplog.text
    assert "camera_fov_deg=" in caplog.text
