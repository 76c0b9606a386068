from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from src.config.config import config

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply `fn` to every item on a thread pool, preserving input order.
    The pool never exceeds config.worker_count (MRSQUANT_THREADS).
    """
    workers = min(workers or config.worker_count, config.worker_count)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mrsquant") as pool:
        return list(pool.map(fn, items))
