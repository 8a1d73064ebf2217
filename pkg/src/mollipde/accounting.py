"""Library-internal resource accounting.

Tracks wall time, bytes of numeric arrays registered by instrumented code
paths, and the number of intermediate arrays stored while evaluating field
derivatives.  Deliberately not an OS-level memory probe: the point is a
portable, deterministic counter that lets tests assert structural claims
(e.g. derivative evaluation cost independent of network depth) rather than
hardware-bound numbers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field


@dataclass
class ResourceCounters:
    wall_time_s: float = 0.0
    peak_live_bytes: int = 0
    live_bytes: int = 0
    derivative_arrays: int = 0
    derivative_seconds: float = 0.0
    _t_start: float = field(default=0.0, repr=False)

    def start(self):
        self._t_start = time.perf_counter()
        return self

    def stop(self):
        self.wall_time_s += time.perf_counter() - self._t_start
        return self

    def note_array(self, array, derivative: bool = False):
        self.live_bytes += array.nbytes
        if self.live_bytes > self.peak_live_bytes:
            self.peak_live_bytes = self.live_bytes
        if derivative:
            self.derivative_arrays += 1

    def release_bytes(self, nbytes: int):
        self.live_bytes = max(0, self.live_bytes - int(nbytes))

    def as_dict(self) -> dict:
        return {
            "wall_time_s": self.wall_time_s,
            "peak_live_bytes": self.peak_live_bytes,
            "derivative_arrays": self.derivative_arrays,
            "derivative_seconds": self.derivative_seconds,
        }


_ACTIVE: list = []


class track:
    """Context manager activating one counter set; nestable."""

    def __init__(self, counters: ResourceCounters):
        self.counters = counters

    def __enter__(self):
        _ACTIVE.append(self.counters)
        self.counters.start()
        return self.counters

    def __exit__(self, *exc):
        self.counters.stop()
        _ACTIVE.remove(self.counters)
        return False


def note_array(array, derivative: bool = False):
    for counters in _ACTIVE:
        counters.note_array(array, derivative=derivative)


def note_seconds(dt: float):
    for counters in _ACTIVE:
        counters.derivative_seconds += dt
