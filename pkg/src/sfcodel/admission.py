"""Admission controllers gating the frontend -> backend hand-off.

Every controller exposes the same small surface: ``can_admit``, ``on_submit``,
``on_complete``, ``on_timer`` and ``set_target``. The budget is denominated in
abstract cost units (bytes plus an optional fixed per-request charge).
"""

from __future__ import annotations

import math
from typing import Optional

from .engine import round_half_up

KiB = 1024
MiB = 1024 * 1024


def cost_of(size: int, cost_fixed: int = 0) -> int:
    if size <= 0:
        raise ValueError(f"request size must be > 0, got {size}")
    return int(size) + int(cost_fixed)


class AdmissionController:
    """Base class; behaves like the unlimited controller."""

    kind = "base"

    def __init__(self) -> None:
        self.budget_used = 0

    def can_admit(self, cost: int) -> bool:
        return True

    def on_submit(self, cost: int, now: int) -> None:
        self.budget_used += cost

    def on_complete(self, cost: int, backend_latency: int, now: int) -> None:
        self.budget_used = max(0, self.budget_used - cost)

    def first_timer_at(self, now: int) -> Optional[int]:
        return None

    def on_timer(self, now: int) -> Optional[int]:
        return None

    def set_target(self, latency: float) -> None:
        pass

    def check_clamps(self) -> None:
        pass


class Unlimited(AdmissionController):
    kind = "unlimited"


class StaticBudget(AdmissionController):
    """Fixed-capacity budget, the analogue of a statically configured throttle."""

    kind = "static"

    def __init__(self, capacity: int):
        super().__init__()
        if capacity <= 0:
            raise ValueError("capacity must be > 0")
        self._capacity = int(capacity)

    @property
    def budget_capacity(self) -> int:
        return self._capacity

    def can_admit(self, cost: int) -> bool:
        used = self.budget_used
        # an empty backend always takes the next request, however large
        return used == 0 or used + cost <= self._capacity


class QbaCodel(AdmissionController):
    """Queuing-budget-adjusting CoDel (the fast loop).

    Every ``interval_current`` microseconds the smallest backend latency seen
    since the previous step is compared with ``target``. A violation shrinks the
    budget by ``ceil(alpha * capacity * (m - target) / m)``, increments the
    violation count and divides the interval by ``sqrt(violation_count)``
    (compounding). Otherwise the budget grows by ``budget_increment`` and the
    interval and count reset.

    ``budget_used`` may transiently exceed ``budget_capacity`` right after a
    decrease; admissions stop until completions bring it back under.
    """

    kind = "qba_codel"

    def __init__(
        self,
        target: float,
        interval_initial: float = 100_000,
        interval_min: float = 1_000,
        budget_capacity: Optional[int] = None,
        budget_increment: int = 64 * KiB,
        budget_min: int = 64 * KiB,
        budget_max: int = 64 * MiB,
        alpha: float = 0.5,
    ):
        super().__init__()
        if target <= 0:
            raise ValueError("target must be > 0")
        if not 0 < interval_min <= interval_initial:
            raise ValueError("need 0 < interval_min <= interval_initial")
        if not 0 < budget_min <= budget_max:
            raise ValueError("need 0 < budget_min <= budget_max")
        if not 0 < alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        self.target = float(target)
        self.interval_initial = float(interval_initial)
        self.interval_min = float(interval_min)
        self.interval_current = float(interval_initial)
        self.violation_count = 0
        self.min_latency_window: Optional[int] = None
        self.budget_min = int(budget_min)
        self.budget_max = int(budget_max)
        cap = self.budget_max if budget_capacity is None else int(budget_capacity)
        self.budget_capacity = min(self.budget_max, max(self.budget_min, cap))
        self.budget_increment = int(budget_increment)
        self.alpha = float(alpha)
        self.steps = 0
        self.violations = 0
        self.empty_windows = 0

    def can_admit(self, cost: int) -> bool:
        used = self.budget_used
        return used == 0 or used + cost <= self.budget_capacity

    def on_complete(self, cost: int, backend_latency: int, now: int) -> None:
        used = self.budget_used - cost
        self.budget_used = used if used > 0 else 0
        w = self.min_latency_window
        if w is None or backend_latency < w:
            self.min_latency_window = backend_latency

    def set_target(self, latency: float) -> None:
        if latency <= 0:
            raise ValueError("target must be > 0")
        self.target = float(latency)

    def first_timer_at(self, now: int) -> int:
        return now + round_half_up(self.interval_current)

    def on_timer(self, now: int) -> int:
        return self.fast_loop_step(now)

    def fast_loop_step(self, now: int) -> int:
        self.steps += 1
        m = self.min_latency_window
        if m is None:
            # no completions at all during the interval: treat as a stall
            self.empty_windows += 1
            m = 2.0 * self.target
        if m > self.target:
            # round() keeps float noise (0.05 * 4259840 * 0.5) from adding a unit
            dec = math.ceil(round(self.alpha * self.budget_capacity * (m - self.target) / m, 9))
            self.budget_capacity = max(self.budget_min, self.budget_capacity - dec)
            self.violation_count += 1
            self.violations += 1
            self.interval_current = max(
                self.interval_min, self.interval_current / math.sqrt(self.violation_count)
            )
        else:
            self.budget_capacity = min(self.budget_max, self.budget_capacity + self.budget_increment)
            self.interval_current = self.interval_initial
            self.violation_count = 0
        self.min_latency_window = None
        return now + round_half_up(self.interval_current)

    def check_clamps(self) -> None:
        if not self.budget_min <= self.budget_capacity <= self.budget_max:
            raise AssertionError(
                f"capacity {self.budget_capacity} outside [{self.budget_min}, {self.budget_max}]"
            )
        if not self.interval_min <= self.interval_current <= self.interval_initial:
            raise AssertionError(f"interval {self.interval_current} outside its clamps")
        if self.budget_used < 0 or self.violation_count < 0:
            raise AssertionError("negative budget_used or violation_count")
