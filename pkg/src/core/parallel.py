"""
Ordered thread-pool map for independent scan points.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
U = TypeVar("U")


def ordered_map(func: Callable[[T], U], items: Iterable[T], threads: int = 1) -> List[U]:
    """Apply func to every item; results come back in input order for any thread count."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
