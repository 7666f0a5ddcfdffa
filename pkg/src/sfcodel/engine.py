"""Discrete-event core: integer-microsecond clock, (fire_at, seq) ordered heap,
and per-consumer seeded random streams."""

from __future__ import annotations

import enum
import heapq
import math
from typing import Callable

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000

# one independent stream per randomness consumer
STREAM_WORKLOAD = 0
STREAM_BACKEND = 1
STREAM_SLOW_LOOP = 2


class EngineError(RuntimeError):
    pass


class EventKind(enum.IntEnum):
    REQUEST_ISSUE = 0
    BATCH_START = 1
    BATCH_COMPLETE = 2
    FAST_LOOP_TIMER = 3
    SLOW_LOOP_TIMER = 4
    PHASE_SWITCH = 5
    MEASUREMENT_FLUSH = 6


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def seconds(s: float) -> int:
    return round_half_up(s * US_PER_S)


def millis(ms: float) -> int:
    return round_half_up(ms * US_PER_MS)


def rng_stream(seed: int, stream_id: int) -> np.random.Generator:
    """PCG64 generator for ``(seed, stream_id)``; identical sequence on every platform."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


class Event:
    __slots__ = ("fire_at", "seq", "kind", "callback", "cancelled", "done")

    def __init__(self, fire_at: int, seq: int, kind: EventKind, callback: Callable[[int], None]):
        self.fire_at = fire_at
        self.seq = seq
        self.kind = kind
        self.callback = callback
        self.cancelled = False
        self.done = False

    def __repr__(self) -> str:
        return f"Event(fire_at={self.fire_at}, seq={self.seq}, kind={self.kind.name})"


class Engine:
    """Single-threaded event loop.

    Callbacks receive the current time. Events sharing a ``fire_at`` dispatch in
    the order they were scheduled. ``dispatch_log`` (when enabled) holds one
    ``(fire_at, seq, kind)`` triple per dispatched event.
    """

    def __init__(self, record_log: bool = False):
        self.now = 0
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.scheduled = 0
        self.cancelled = 0
        self.dispatched = 0
        self._live = 0
        self.dispatch_log: list[tuple[int, int, int]] | None = [] if record_log else None
        self.post_dispatch_hooks: list[Callable[[Event], None]] = []

    @property
    def pending(self) -> int:
        return self._live

    def schedule(self, fire_at: int, kind: EventKind, callback: Callable[[int], None]) -> Event:
        fire_at = int(fire_at)
        if fire_at < self.now:
            raise EngineError(f"cannot schedule {kind.name} at {fire_at} < now={self.now}")
        ev = Event(fire_at, self._seq, kind, callback)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        self.scheduled += 1
        self._live += 1
        return ev

    def schedule_in(self, delay: int, kind: EventKind, callback: Callable[[int], None]) -> Event:
        return self.schedule(self.now + delay, kind, callback)

    def cancel(self, ev: Event) -> bool:
        if ev.cancelled or ev.done:
            return False
        ev.cancelled = True
        self.cancelled += 1
        self._live -= 1
        return True

    def run_until(self, t_end: int) -> int:
        t_end = int(t_end)
        if t_end < self.now:
            raise EngineError(f"run_until({t_end}) is before now={self.now}")
        heap = self._heap
        log = self.dispatch_log
        hooks = self.post_dispatch_hooks
        count = 0
        while heap and heap[0][0] <= t_end:
            fire_at, seq, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            ev.done = True
            self.now = fire_at
            self._live -= 1
            self.dispatched += 1
            count += 1
            if log is not None:
                log.append((fire_at, seq, int(ev.kind)))
            ev.callback(fire_at)
            for hook in hooks:
                hook(ev)
        self.now = t_end
        return count
