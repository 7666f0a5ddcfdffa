"""FIFO frontend queue in front of the admission gate."""

from __future__ import annotations

from collections import deque
from typing import Callable, Optional

from .admission import AdmissionController
from .workload import Request


class DuplicateRequestError(RuntimeError):
    pass


class FrontendQueue:
    """Holds requests until the controller admits them, strictly in arrival order.

    No reordering to fit the budget: a large head request blocks smaller ones
    behind it.
    """

    def __init__(
        self,
        controller: Optional[AdmissionController],
        deliver: Callable[[Request, int], None],
    ):
        self.controller = controller
        self.deliver = deliver
        self.pending: deque[Request] = deque()
        self._seen: set[int] = set()
        self.admitted = 0

    def __len__(self) -> int:
        return len(self.pending)

    def on_arrival(self, r: Request, now: int) -> None:
        if r.id in self._seen:
            raise DuplicateRequestError(f"request {r.id} already pending or admitted")
        self._seen.add(r.id)
        self.pending.append(r)
        self.drain(now)

    def forget(self, r: Request) -> None:
        self._seen.discard(r.id)

    def drain(self, now: int) -> int:
        pending = self.pending
        ctl = self.controller
        deliver = self.deliver
        n = 0
        if ctl is None:
            while pending:
                r = pending.popleft()
                r.t_admitted = now
                deliver(r, now)
                n += 1
        else:
            while pending and ctl.can_admit(pending[0].cost):
                r = pending.popleft()
                r.t_admitted = now
                ctl.on_submit(r.cost, now)
                deliver(r, now)
                n += 1
        self.admitted += n
        return n
