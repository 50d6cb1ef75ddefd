"""Deterministic per-agent work distribution.

FLPO_THREADS caps the worker pool (default 1 = sequential). Results are
always collected in ascending agent order, so reductions are bitwise
independent of the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")


def thread_budget() -> int:
    raw = os.environ.get("FLPO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def agent_map(fn: Callable[[int], T], n_agents: int) -> list[T]:
    workers = min(thread_budget(), n_agents)
    if workers <= 1:
        return [fn(i) for i in range(n_agents)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_agents)))
