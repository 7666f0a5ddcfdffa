"""Slow loop that retunes the fast loop's latency target.

Each step records ``(target in force, throughput over the step)``, fits
``throughput = a + b*ln(target)`` over a bounded history, takes the point
where the tangent slope equals ``target_slope`` (``b / target_slope``) as the
optimum, and installs a log-normal draw whose mode is that optimum.

The regression works in scaled units (``latency_unit_us`` and
``throughput_unit``) because the slope knob is only meaningful once both axes
have a fixed unit; by default milliseconds and megabits (125000 cost units)
per second.

A fit with ``b <= 0`` says throughput does not grow with latency anywhere in
the sampled range. By default the optimum then drops to ``target_floor``
(``b / slope`` clamped); ``nonpositive_b="hold"`` keeps the previous optimum
instead, which can stall the loop when every sample sits past saturation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .admission import QbaCodel
from .engine import US_PER_S, round_half_up
from .estimation import (
    DegenerateFitError,
    DomainError,
    CurveFit,
    fit_log_curve,
    lognormal_mode_sample,
)


@dataclass(frozen=True)
class Sample:
    target: float  # us
    throughput: float  # cost units per second


@dataclass(frozen=True)
class SlowStep:
    t: int
    throughput: float
    status: str  # "fit", "ineligible", "degenerate", "nonpositive_b"
    a: float
    b: float
    optimal_raw: float  # pre-clamp optimum (us), nan when no fit
    optimal: float  # mode used for the noisy draw (us)
    target: float  # installed target (us)


class SlowLoop:
    def __init__(
        self,
        fast: QbaCodel,
        rng: np.random.Generator,
        target_slope: float = 5.0,
        interval: float = 2 * US_PER_S,
        history_len: int = 100,
        noise_sigma: float = 0.25,
        target_floor: float = 1_000,
        target_ceiling: float = 10 * US_PER_S,
        min_fit_points: int = 8,
        min_distinct_targets: int = 4,
        latency_unit_us: float = 1_000,
        throughput_unit: float = 125_000,
        nonpositive_b: str = "floor",
    ):
        if target_slope <= 0:
            raise ValueError("target_slope must be > 0")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if history_len < 2:
            raise ValueError("history_len must be >= 2")
        if not 0 < target_floor <= target_ceiling:
            raise ValueError("need 0 < target_floor <= target_ceiling")
        if nonpositive_b not in ("floor", "hold"):
            raise ValueError("nonpositive_b must be 'floor' or 'hold'")
        self.fast = fast
        self.rng = rng
        self.target_slope = float(target_slope)
        self.interval = float(interval)
        self.history: deque[Sample] = deque()
        self.history_len = int(history_len)
        self.noise_sigma = float(noise_sigma)
        self.target_floor = float(target_floor)
        self.target_ceiling = float(target_ceiling)
        self.min_fit_points = int(min_fit_points)
        self.min_distinct_targets = int(min_distinct_targets)
        self.latency_unit_us = float(latency_unit_us)
        self.throughput_unit = float(throughput_unit)
        self.nonpositive_b = nonpositive_b

        self.optimal = self._clamp(fast.target)
        self.window_cost = 0
        self.window_start = 0
        self.last_fit: Optional[CurveFit] = None
        self.fit_skips = 0
        self.fits = 0
        self.steps: list[SlowStep] = []

    def _clamp(self, t: float) -> float:
        return min(self.target_ceiling, max(self.target_floor, t))

    def record_completion(self, cost: int, now: int) -> None:
        self.window_cost += cost

    def start(self, now: int) -> int:
        self.window_start = now
        return now + round_half_up(self.interval)

    def eligible(self) -> bool:
        if len(self.history) < self.min_fit_points:
            return False
        return len({s.target for s in self.history}) >= self.min_distinct_targets

    def slow_loop_step(self, now: int) -> int:
        elapsed = now - self.window_start
        throughput = self.window_cost * US_PER_S / elapsed if elapsed > 0 else 0.0
        self.history.append(Sample(self.fast.target, throughput))
        while len(self.history) > self.history_len:
            self.history.popleft()

        a = b = raw = math.nan
        if not self.eligible():
            status = "ineligible"
        else:
            xs = [s.target / self.latency_unit_us for s in self.history]
            ys = [s.throughput / self.throughput_unit for s in self.history]
            try:
                fit = fit_log_curve(xs, ys)
            except (DegenerateFitError, DomainError):
                status = "degenerate"
            else:
                a, b = fit.a, fit.b
                if fit.b <= 0:
                    # counted as a skip either way; "floor" lets b/slope hit the
                    # clamp, "hold" keeps the previous optimum
                    status = "nonpositive_b"
                    if self.nonpositive_b == "floor":
                        self.optimal = self.target_floor
                else:
                    status = "fit"
                    self.last_fit = fit
                    raw = fit.b / self.target_slope * self.latency_unit_us
                    self.optimal = self._clamp(raw)
        if status == "fit":
            self.fits += 1
        else:
            self.fit_skips += 1

        # noise is applied around the last good optimum even when the fit is
        # skipped, otherwise the history never spreads enough to become fittable
        target = self._clamp(lognormal_mode_sample(self.optimal, self.noise_sigma, self.rng))
        self.fast.set_target(target)
        self.steps.append(SlowStep(now, throughput, status, a, b, raw, self.optimal, target))

        self.window_cost = 0
        self.window_start = now
        return now + round_half_up(self.interval)


class SfCodel(QbaCodel):
    """Fast loop plus the slow target-adjusting loop."""

    kind = "sf_codel"

    def __init__(self, rng: np.random.Generator, slow_params: Optional[dict] = None, **fast_params):
        super().__init__(**fast_params)
        self.slow = SlowLoop(self, rng, **(slow_params or {}))

    def on_complete(self, cost: int, backend_latency: int, now: int) -> None:
        super().on_complete(cost, backend_latency, now)
        self.slow.window_cost += cost
