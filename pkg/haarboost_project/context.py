"""
Run-wide context shared by the workflows.

The worker count chosen with ``--jobs`` is kept in a ContextVar, the same way
request-scoped state is carried without threading it through every call.
"""

from __future__ import annotations

from contextvars import ContextVar

_worker_count: ContextVar[int] = ContextVar('worker_count', default=1)


def set_worker_count(jobs: int) -> None:
    """
    Set the maximum number of worker threads for scanning.

    Args:
        jobs: Positive worker count; values below 1 are treated as 1
    """
    _worker_count.set(max(1, int(jobs)))


def get_worker_count() -> int:
    """
    Get the maximum number of worker threads for scanning.

    Returns:
        Worker count (defaults to 1)
    """
    return _worker_count.get()
