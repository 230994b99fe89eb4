import functools
import time
import uuid
from typing import Callable

from loguru import logger

from .exceptions import EXIT_OK, handle_command_exception


def command_middleware(name: str) -> Callable:
    """Wrap a subcommand with a run id, start/completion logging and exit-code mapping."""
    def decorator(func: Callable[..., int]) -> Callable[..., int]:
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> int:
            run_id = str(uuid.uuid4())
            start_time = time.perf_counter()

            with logger.contextualize(run_id=run_id, command=name):
                logger.info(f"Command started: {name}")
                try:
                    result = func(*args, **kwargs)
                except Exception as exc:
                    return handle_command_exception(exc, run_id, name)

                process_time = time.perf_counter() - start_time
                logger.bind(process_time=process_time).info(f"Command completed: {name} in {process_time:.2f}s")
                return EXIT_OK if result is None else result

        return wrapper
    return decorator
