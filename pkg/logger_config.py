import logging
import time
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
FILE_LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'


class MyFormatter(logging.Formatter):
    def formatTime(self, record, datefmt=None):
        ct = self.converter(record.created)
        t = time.strftime("%H:%M:%S", ct)
        s = "%s,%03d" % (t, record.msecs)
        return s


def setup_logger(name=None, level=logging.INFO, log_file: Optional[Union[str, Path]] = None):
    """
    Stream logging in HH:MM:SS,mmm - LEVEL - message form

    With no name the root logger is configured, so every module logger of
    the engine writes through the same handlers. Calling again with a
    `log_file` adds a file handler next to the existing stream handler.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    if not any(type(h) is logging.StreamHandler for h in logger.handlers):
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(MyFormatter(LOG_FORMAT))
        logger.addHandler(stream_handler)
        if name is not None:
            logger.propagate = False

    if log_file is not None:
        attach_log_file(logger, log_file)

    return logger


def attach_log_file(logger: logging.Logger, log_file: Union[str, Path]) -> logging.FileHandler:
    """Append records to `log_file` (module name included); one handler per path"""
    path = Path(log_file).resolve()
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == path:
            return handler

    path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(path, encoding="utf-8")
    file_handler.setFormatter(MyFormatter(FILE_LOG_FORMAT))
    logger.addHandler(file_handler)
    return file_handler
