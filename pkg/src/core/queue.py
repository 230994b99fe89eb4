import queue
import threading
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, Optional, TypeVar

from loguru import logger

from .config import settings

T = TypeVar("T")
R = TypeVar("R")


class TaskStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


def run_ordered(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> Iterator[R]:
    """Map fn over items on a process pool, yielding results in submission order."""
    workers = settings.workers if workers is None else workers
    if workers <= 1:
        for item in items:
            yield fn(item)
        return

    logger.debug(f"Starting process pool with {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(fn, items, chunksize=4)


_SENTINEL = object()


class PrefetchQueue:
    """Bounded producer/consumer queue that prepares items on a worker thread.

    The consumer sees items in exactly the producer's order, so results never
    depend on the queue depth.
    """

    def __init__(self, producer: Iterable[Any], depth: Optional[int] = None):
        self.depth = max(1, depth if depth is not None else settings.prefetch_depth)
        self._producer = producer
        self._queue: "queue.Queue[Any]" = queue.Queue(maxsize=self.depth)
        self._error: Optional[BaseException] = None
        self._stop = threading.Event()
        self.status = TaskStatus.PENDING
        self._thread = threading.Thread(target=self._run, name="prefetch", daemon=True)

    def _put(self, item: Any) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self):
        self.status = TaskStatus.RUNNING
        try:
            for item in self._producer:
                if not self._put(item):
                    return
            self.status = TaskStatus.COMPLETED
        except BaseException as e:
            self._error = e
            self.status = TaskStatus.FAILED
            logger.error(f"Prefetch producer failed: {e}")
        finally:
            self._put(_SENTINEL)

    def __iter__(self) -> Iterator[Any]:
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _SENTINEL:
                    break
                yield item
            if self._error is not None:
                raise self._error
        finally:
            self.close()

    def close(self):
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout=1.0)
