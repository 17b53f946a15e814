"""Ordered fan-out of independent jobs over a bounded pool of worker threads."""

import asyncio
import logging
from collections.abc import Callable, Sequence
from typing import Any, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


async def _gather_ordered(
    func: Callable[[T], R], items: Sequence[T], threads: int
) -> list[R | BaseException]:
    semaphore = asyncio.Semaphore(threads)

    async def run_one(index: int, item: T) -> tuple[int, Any]:
        async with semaphore:
            return index, await asyncio.to_thread(func, item)

    tasks = [run_one(i, item) for i, item in enumerate(items)]
    completed = await asyncio.gather(*tasks, return_exceptions=True)

    # Process results and maintain submission order
    results: list[Any] = [None] * len(items)
    for i, outcome in enumerate(completed):
        if isinstance(outcome, BaseException):
            results[i] = outcome
        else:
            index, value = outcome
            results[index] = value
    return results


def map_ordered(
    func: Callable[[T], R],
    items: Sequence[T],
    threads: int = 1,
    return_exceptions: bool = False,
) -> list[Any]:
    """Apply ``func`` to every item; results come back in submission order.

    With ``return_exceptions`` a failing job yields its exception in place;
    otherwise the first failure (in submission order) is raised.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        results: list[Any] = []
        for item in items:
            try:
                results.append(func(item))
            except Exception as e:
                if not return_exceptions:
                    raise
                results.append(e)
        return results

    results = asyncio.run(_gather_ordered(func, items, threads))
    if not return_exceptions:
        for outcome in results:
            if isinstance(outcome, BaseException):
                raise outcome
    return results
