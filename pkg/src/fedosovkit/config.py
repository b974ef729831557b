"""Runtime settings read from the environment."""
from __future__ import annotations

import os

THREADS_ENV = "FEDOSOVKIT_THREADS"


def thread_count() -> int:
    """Worker threads allowed for library-level parallel loops.

    ``FEDOSOVKIT_THREADS`` caps the count; it never exceeds the CPU count.
    """
    cpus = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return cpus
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return min(n, cpus)
