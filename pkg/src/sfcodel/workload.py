"""Closed-loop write workload: keeps ``queue_depth`` requests outstanding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .admission import cost_of
from .engine import Engine, EventKind, round_half_up


class ConfigError(ValueError):
    pass


class ConservationError(RuntimeError):
    pass


class Request:
    __slots__ = ("id", "size", "cost", "t_created", "t_admitted", "t_backend_done")

    def __init__(self, id: int, size: int, cost: int, t_created: int):
        self.id = id
        self.size = size
        self.cost = cost
        self.t_created = t_created
        self.t_admitted: Optional[int] = None
        self.t_backend_done: Optional[int] = None

    def __repr__(self) -> str:
        return (
            f"Request(id={self.id}, size={self.size}, t_created={self.t_created}, "
            f"t_admitted={self.t_admitted}, t_backend_done={self.t_backend_done})"
        )


@dataclass(frozen=True)
class WorkloadPhase:
    duration: int  # us
    request_size: int  # bytes
    queue_depth: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("phase duration must be > 0")
        if self.request_size <= 0:
            raise ConfigError("request_size must be > 0")
        if self.queue_depth < 1:
            raise ConfigError("queue_depth must be >= 1")


@dataclass(frozen=True)
class WorkloadSpec:
    phases: Sequence[WorkloadPhase]
    seed: int = 0
    think_time: int = 0  # us between a completion and its replacement
    think_time_dist: str = "fixed"  # or "exponential"
    cost_fixed: int = 0

    @property
    def total_duration(self) -> int:
        return sum(p.duration for p in self.phases)

    @property
    def max_request_size(self) -> int:
        return max(p.request_size for p in self.phases)


class ClosedLoopWorkload:
    def __init__(
        self,
        engine: Engine,
        deliver: Callable[[Request, int], None],
        rng: Optional[np.random.Generator] = None,
    ):
        self.engine = engine
        self.deliver = deliver
        self.rng = rng
        self.spec: Optional[WorkloadSpec] = None
        self.phase_index = 0
        self.created = 0
        self.completed = 0
        self.scheduled_issues = 0
        self.live: dict[int, Request] = {}
        self._next_id = 0

    @property
    def phase(self) -> WorkloadPhase:
        return self.spec.phases[self.phase_index]

    @property
    def outstanding(self) -> int:
        return self.created - self.completed

    def start(self, spec: WorkloadSpec) -> None:
        if not spec.phases:
            raise ConfigError("workload needs at least one phase")
        self.spec = spec
        self.phase_index = 0
        t = self.engine.now
        for i, p in enumerate(spec.phases[1:], start=1):
            t += spec.phases[i - 1].duration
            self.engine.schedule(t, EventKind.PHASE_SWITCH, self._make_switch(i))
        self._fill(self.engine.now)

    def _make_switch(self, index: int):
        def switch(now: int) -> None:
            self.phase_index = index
            self._fill(now)

        return switch

    def _fill(self, now: int) -> None:
        depth = self.phase.queue_depth
        while self.created - self.completed + self.scheduled_issues < depth:
            self._issue(now)

    def _issue(self, now: int) -> None:
        size = self.phase.request_size
        r = Request(self._next_id, size, cost_of(size, self.spec.cost_fixed), now)
        self._next_id += 1
        self.created += 1
        self.live[r.id] = r
        self.deliver(r, now)

    def _think(self) -> int:
        tt = self.spec.think_time
        if tt <= 0:
            return 0
        if self.spec.think_time_dist == "exponential":
            return round_half_up(self.rng.exponential(tt))
        return tt

    def _delayed_issue(self, now: int) -> None:
        self.scheduled_issues -= 1
        self._issue(now)

    def on_completion(self, finished: Request, now: int) -> None:
        if self.live.pop(finished.id, None) is None:
            raise ConservationError(f"completion of unknown or already completed request {finished.id}")
        self.completed += 1
        depth = self.phase.queue_depth
        while self.created - self.completed + self.scheduled_issues < depth:
            delay = self._think()
            if delay == 0:
                self._issue(now)
            else:
                self.scheduled_issues += 1
                self.engine.schedule(now + delay, EventKind.REQUEST_ISSUE, self._delayed_issue)
