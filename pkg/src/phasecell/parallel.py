"""Order-preserving map over independent tasks."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, jobs: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally in ``jobs`` worker processes.

    Results come back in input order, so outputs do not depend on ``jobs``.
    """
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))
