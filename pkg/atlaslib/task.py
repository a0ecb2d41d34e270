"""Orchestration of independent Monte Carlo tasks."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import TYPE_CHECKING, TypeVar

from .errors import ValidationError

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Iterator

log = logging.getLogger("task")

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(master: int, name: str, index: int) -> int:
    """A 64-bit seed for task `index` of the named experiment.

    Depends only on its arguments, so results do not depend on worker count
    or scheduling order.
    """
    digest = hashlib.blake2b(
        f"{master}:{name}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def _serial(
    fn: Callable[[T], R], items: list[T], workers: int
) -> Iterator[tuple[int, R]]:
    """Run tasks in order yielding (index, result)."""
    del workers
    for index, item in enumerate(items):
        yield index, fn(item)


def _parallel(
    fn: Callable[[T], R], items: list[T], workers: int
) -> Iterator[tuple[int, R]]:
    """Run tasks in a thread pool yielding (index, result) as they complete."""
    with ThreadPoolExecutor(max_workers=min(len(items), workers)) as pool:
        futures = {pool.submit(fn, item): index for index, item in enumerate(items)}
        for future in as_completed(futures):
            yield futures[future], future.result()


def run_tasks(
    fn: Callable[[T], R], items: Iterable[T], *, workers: int = 1
) -> list[R]:
    """Apply `fn` to every item and return the results in item order."""
    items = list(items)
    if not items:
        return []
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")

    executor = _parallel if workers > 1 and len(items) > 1 else _serial
    log.debug("Running %d tasks with %s executor", len(items), executor.__name__)

    results: dict[int, R] = {}
    for index, result in executor(fn, items, workers):
        results[index] = result
    return [results[index] for index in range(len(items))]
