# python imports
import logging
import multiprocessing as mp
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    Apply ``func`` to every item and return the results in input order.

    With ``workers > 1`` the items are farmed out to a process pool; ``func``
    must then be a module-level function with picklable arguments. The output
    never depends on the worker count.

    Args:
        func (Callable): The function to apply.
        items (Iterable): Inputs, consumed once.
        workers (int): Number of worker processes.

    Returns:
        List: ``[func(item) for item in items]``.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    workers = min(workers, len(items))
    chunksize = max(1, len(items) // (4 * workers))
    logger.debug(f"Mapping {len(items)} items over {workers} workers (chunksize {chunksize})")
    with mp.get_context("spawn").Pool(processes=workers) as pool:
        return pool.map(func, items, chunksize=chunksize)
