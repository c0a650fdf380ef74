import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def time_logger(func):
    """Decorator function to log time taken by any function."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        execution_time = time.perf_counter() - start_time
        logger.info(f"Running {func.__qualname__}: --- {execution_time:.3f} seconds ---")
        return result

    return wrapper
