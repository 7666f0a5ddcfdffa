"""Black-box storage backend: unbounded buffer and one batching service station.

A batch of ``k`` requests totalling ``S`` bytes takes
``(t_fixed + t_per_byte * S) * noise`` microseconds, rounded half-up to a tick,
where ``noise`` is log-normal with mean 1. The fixed per-batch overhead is what
batching amortizes; the unbounded buffer is what bloats.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import Engine, EventKind, round_half_up
from .workload import Request


@dataclass(frozen=True)
class BackendConfig:
    batch_max: int = 64
    t_fixed: float = 500.0  # us per batch
    t_per_byte: float = 0.01  # us per byte
    noise_sigma: float = 0.3

    def __post_init__(self):
        if self.batch_max < 1:
            raise ValueError("batch_max must be >= 1")
        if self.t_fixed <= 0 or self.t_per_byte <= 0:
            raise ValueError("t_fixed and t_per_byte must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def service_time(self, total_bytes: int, noise: float = 1.0) -> int:
        return round_half_up((self.t_fixed + self.t_per_byte * total_bytes) * noise)

    def max_throughput(self, request_size: int) -> float:
        """Saturated throughput in bytes per microsecond with noise off."""
        s = self.batch_max * request_size
        return s / (self.t_fixed + self.t_per_byte * s)


class Backend:
    def __init__(
        self,
        config: BackendConfig,
        engine: Engine,
        rng: Optional[np.random.Generator] = None,
        on_done: Optional[Callable[[list, int], None]] = None,
    ):
        self.config = config
        self.engine = engine
        self.rng = rng
        self.on_done = on_done
        self.buffer: deque[Request] = deque()
        self.batch: list[Request] = []
        self.busy = False
        self.in_backend_count = 0
        self.in_backend_cost = 0
        self.batches = 0
        self._kick = None
        # time-integral of in_backend_count, for Little's law
        self.area = 0
        self._area_t = 0
        self._sigma = config.noise_sigma
        self._mu = -0.5 * config.noise_sigma ** 2

    def _advance_area(self, now: int) -> None:
        self.area += self.in_backend_count * (now - self._area_t)
        self._area_t = now

    def area_at(self, now: int) -> int:
        return self.area + self.in_backend_count * (now - self._area_t)

    def submit(self, r: Request, now: int) -> None:
        self._advance_area(now)
        self.buffer.append(r)
        self.in_backend_count += 1
        self.in_backend_cost += r.cost
        if not self.busy and self._kick is None:
            # start at the end of this tick so same-tick arrivals share the batch
            self._kick = self.engine.schedule(now, EventKind.BATCH_START, self._on_kick)

    def _on_kick(self, now: int) -> None:
        self._kick = None
        if not self.busy and self.buffer:
            self.start_batch(now)

    def noise_factor(self) -> float:
        if self._sigma == 0:
            return 1.0
        return float(self.rng.lognormal(self._mu, self._sigma))

    def start_batch(self, now: int) -> int:
        if self.busy or not self.buffer:
            raise RuntimeError("start_batch needs an idle backend and a nonempty buffer")
        buf = self.buffer
        k = min(self.config.batch_max, len(buf))
        batch = [buf.popleft() for _ in range(k)]
        total = 0
        for r in batch:
            total += r.size
        service = self.config.service_time(total, self.noise_factor())
        self.batch = batch
        self.busy = True
        self.batches += 1
        self.engine.schedule(now + service, EventKind.BATCH_COMPLETE, self.on_batch_complete)
        return service

    def on_batch_complete(self, now: int) -> list:
        batch = self.batch
        self._advance_area(now)
        self.batch = []
        self.busy = False
        cost = 0
        for r in batch:
            r.t_backend_done = now
            cost += r.cost
        self.in_backend_count -= len(batch)
        self.in_backend_cost -= cost
        if self.buffer and self._kick is None:
            self._kick = self.engine.schedule(now, EventKind.BATCH_START, self._on_kick)
        if self.on_done is not None:
            self.on_done(batch, now)
        return batch
