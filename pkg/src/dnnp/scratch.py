"""Tracked scratch allocation.

Every transient buffer the engines request goes through :func:`alloc`, so a
test can install a tracker and assert bounds on what an engine allocated
(e.g. that the implicit convolution engine never asks for anything bigger
than a tile or the output).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

_lock = threading.Lock()
_trackers: list["AllocationLog"] = []


@dataclass
class AllocationLog:
    """Record of scratch requests made while the log was installed."""

    records: list[tuple[str, int]] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return sum(n for _, n in self.records)

    @property
    def max_bytes(self) -> int:
        return max((n for _, n in self.records), default=0)

    def bytes_for(self, tag: str) -> int:
        return sum(n for t, n in self.records if t == tag)


@contextmanager
def track():
    """Install an AllocationLog for the duration of the block.

    Nested tracking works; every active log sees every allocation.
    """
    log = AllocationLog()
    with _lock:
        _trackers.append(log)
    try:
        yield log
    finally:
        with _lock:
            _trackers.remove(log)


def _record(tag: str, nbytes: int) -> None:
    with _lock:
        for log in _trackers:
            log.records.append((tag, nbytes))


def alloc(shape, dtype, tag: str) -> np.ndarray:
    """Allocate an uninitialized scratch array, recording it with active logs."""
    arr = np.empty(shape, dtype=dtype)
    _record(tag, arr.nbytes)
    return arr


def zeros(shape, dtype, tag: str) -> np.ndarray:
    """Allocate a zero-filled scratch array, recording it with active logs."""
    arr = np.zeros(shape, dtype=dtype)
    _record(tag, arr.nbytes)
    return arr
