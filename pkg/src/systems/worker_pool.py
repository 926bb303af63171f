import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "AFEM_THREADS"

logger = logging.getLogger(__name__)


class WorkerPool:
    """Shared thread pool for cell assembly, pair solves and CI block work.

    In deterministic mode results are always combined in submission order so
    floating point sums do not depend on thread scheduling.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(WorkerPool, cls).__new__(cls)
            cls._instance.initialize()
        return cls._instance

    def initialize(self):
        self.threads = 1
        self.deterministic = True
        self._executor: Optional[ThreadPoolExecutor] = None

    def configure(self, threads: Optional[int] = None, deterministic: bool = True):
        env = os.environ.get(THREADS_ENV)
        if env:
            threads = int(env)
        threads = max(1, int(threads or 1))
        if threads != self.threads:
            self.shutdown()
        self.threads = threads
        self.deterministic = deterministic
        logger.info(
            "Worker pool: %d thread(s), %s reduction",
            self.threads,
            "deterministic" if deterministic else "fast",
        )

    @property
    def executor(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(
                max_workers=self.threads, thread_name_prefix="afem"
            )
        return self._executor

    def split(self, n: int, per_thread: int = 4) -> List[np.ndarray]:
        """Contiguous index blocks covering range(n), a few per thread"""
        parts = max(1, min(per_thread * self.threads, n))
        return [block for block in np.array_split(np.arange(n), parts) if len(block)]

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply fn to every item, results in submission order"""
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(item) for item in items]
        return list(self.executor.map(fn, items))

    def reduce_sum(self, fn: Callable[[T], R], items: Iterable[T], start=0):
        """Sum fn(item) over items; completion order in fast mode"""
        items = list(items)
        total = start
        if self.threads == 1 or len(items) < 2 or self.deterministic:
            for result in self.map_ordered(fn, items):
                total = total + result
            return total
        futures = [self.executor.submit(fn, item) for item in items]
        for future in as_completed(futures):
            total = total + future.result()
        return total

    def shutdown(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
