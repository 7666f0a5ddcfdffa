"""Wire workload -> frontend -> admission -> backend on one engine and run it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine as eng
from .admission import AdmissionController, QbaCodel, StaticBudget, Unlimited
from .backend import Backend, BackendConfig
from .config import ScenarioConfig
from .engine import Engine, EventKind, US_PER_S
from .frontend import FrontendQueue
from .metrics import SCHEMA_VERSION, MetricsStore
from .target_adjust import SfCodel, SlowStep
from .workload import ClosedLoopWorkload, WorkloadPhase, WorkloadSpec


class InvariantViolation(AssertionError):
    def __init__(self, name: str, detail: str):
        self.name = name
        super().__init__(f"invariant '{name}' violated: {detail}")


def workload_spec(cfg: ScenarioConfig) -> WorkloadSpec:
    wl = cfg["workload"]
    phases = [
        WorkloadPhase(eng.seconds(p["duration_s"]), p["request_size"], p["queue_depth"])
        for p in wl["phases"]
    ]
    return WorkloadSpec(
        phases=phases,
        seed=cfg["run"]["seed"],
        think_time=wl["think_time_us"],
        think_time_dist=wl["think_time_dist"],
        cost_fixed=wl["cost_fixed"],
    )


def backend_config(cfg: ScenarioConfig) -> BackendConfig:
    b = cfg["backend"]
    return BackendConfig(
        batch_max=b["batch_max"],
        t_fixed=b["t_fixed_us"],
        t_per_byte=b["t_per_byte_us"],
        noise_sigma=b["noise_sigma"],
    )


def fast_params(adm: dict) -> dict:
    return dict(
        target=adm["target_ms"] * 1000.0,
        interval_initial=adm["interval_initial_ms"] * 1000.0,
        interval_min=adm["interval_min_ms"] * 1000.0,
        budget_capacity=adm["budget_initial"],
        budget_increment=adm["budget_increment"],
        budget_min=adm["budget_min"],
        budget_max=adm["budget_max"],
        alpha=adm["alpha"],
    )


def slow_params(sf: dict) -> dict:
    return dict(
        target_slope=sf["target_slope"],
        interval=sf["slow_interval_s"] * US_PER_S,
        history_len=sf["history_len"],
        noise_sigma=sf["noise_sigma"],
        target_floor=sf["target_floor_ms"] * 1000.0,
        target_ceiling=sf["target_ceiling_ms"] * 1000.0,
        min_fit_points=sf["min_fit_points"],
        min_distinct_targets=sf["min_distinct_targets"],
        latency_unit_us=sf["latency_unit_us"],
        throughput_unit=sf["throughput_unit"],
        nonpositive_b=sf["nonpositive_b"],
    )


def build_controller(cfg: ScenarioConfig, rng: np.random.Generator) -> AdmissionController:
    adm = cfg["admission"]
    kind = adm["kind"]
    if kind == "unlimited":
        return Unlimited()
    if kind == "static":
        return StaticBudget(adm["capacity"])
    if kind == "qba_codel":
        return QbaCodel(**fast_params(adm))
    params = fast_params(adm)
    params["target"] = cfg["sf_codel"]["initial_target_ms"] * 1000.0
    return SfCodel(rng, slow_params(cfg["sf_codel"]), **params)


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: MetricsStore
    summary: dict
    controller: Optional[AdmissionController]
    engine: Engine
    window: tuple[int, int]

    @property
    def slow_steps(self) -> Optional[list[SlowStep]]:
        if isinstance(self.controller, SfCodel):
            return self.controller.slow.steps
        return None

    def steps_in(self, window) -> list[SlowStep]:
        t0, t1 = window
        return [s for s in (self.slow_steps or []) if t0 <= s.t < t1]

    def mean_target(self, window) -> float:
        return float(np.mean([s.target for s in self.steps_in(window)]))

    def std_target(self, window) -> float:
        return float(np.std([s.target for s in self.steps_in(window)]))

    def fit_skip_rate(self, window) -> float:
        steps = self.steps_in(window)
        if not steps:
            return float("nan")
        return sum(s.status != "fit" for s in steps) / len(steps)


class Simulation:
    """One seeded run of a scenario.

    ``attach_controller=False`` bypasses the admission gate entirely (the frontend
    forwards everything), which should be indistinguishable from ``unlimited``.
    """

    def __init__(self, cfg: ScenarioConfig, attach_controller: bool = True,
                 check_invariants: Optional[bool] = None):
        self.cfg = cfg
        seed = cfg["run"]["seed"]
        self.duration = cfg.duration_us
        self.warmup = cfg.warmup_us
        self.sample_interval = eng.millis(cfg["run"]["sample_interval_ms"])
        if check_invariants is None:
            check_invariants = cfg["run"]["check_invariants"]
        self.check_invariants = check_invariants

        self.engine = Engine(record_log=cfg["run"]["record_log"])
        self.metrics = MetricsStore()
        self.backend = Backend(backend_config(cfg), self.engine,
                               eng.rng_stream(seed, eng.STREAM_BACKEND), self._on_batch_done)
        self.controller = (build_controller(cfg, eng.rng_stream(seed, eng.STREAM_SLOW_LOOP))
                           if attach_controller else None)
        self.frontend = FrontendQueue(self.controller, self.backend.submit)
        self.workload = ClosedLoopWorkload(self.engine, self.frontend.on_arrival,
                                           eng.rng_stream(seed, eng.STREAM_WORKLOAD))
        self._done_cost = 0
        self._flush_cost = 0
        self._last_done_id = -1
        self._area_at_warmup = 0
        self.invariant_checks = 0

    # -- event plumbing --------------------------------------------------

    def _on_batch_done(self, batch, now: int) -> None:
        self.metrics.record_batch(batch, now)
        if self.check_invariants:
            for r in batch:
                if r.id <= self._last_done_id:
                    raise InvariantViolation("fifo_completion", f"request {r.id} after {self._last_done_id}")
                self._last_done_id = r.id
        ctl = self.controller
        fe = self.frontend
        wl = self.workload
        for r in batch:
            self._done_cost += r.cost
            fe.forget(r)
            if ctl is not None:
                ctl.on_complete(r.cost, now - r.t_admitted, now)
            wl.on_completion(r, now)
        fe.drain(now)

    def _on_fast_timer(self, now: int) -> None:
        ctl = self.controller
        window_min = ctl.min_latency_window
        nxt = ctl.on_timer(now)
        m = self.metrics
        m.trace("min_latency").record(now, float("nan") if window_min is None else window_min)
        m.trace("budget_capacity").record(now, ctl.budget_capacity)
        m.trace("interval_current").record(now, ctl.interval_current)
        self.frontend.drain(now)
        if nxt is not None:
            self.engine.schedule(nxt, EventKind.FAST_LOOP_TIMER, self._on_fast_timer)

    def _on_slow_timer(self, now: int) -> None:
        slow = self.controller.slow
        nxt = slow.slow_loop_step(now)
        self.metrics.trace("target").record(now, self.controller.target)
        self.metrics.trace("optimal_target").record(now, slow.optimal)
        self.engine.schedule(nxt, EventKind.SLOW_LOOP_TIMER, self._on_slow_timer)

    def _on_flush(self, now: int) -> None:
        m = self.metrics
        be = self.backend
        m.trace("backend_buffer").record(now, len(be.buffer))
        m.trace("in_backend").record(now, be.in_backend_count)
        m.trace("frontend_pending").record(now, len(self.frontend))
        delta = self._done_cost - self._flush_cost
        self._flush_cost = self._done_cost
        m.trace("throughput").record(now, delta * US_PER_S / self.sample_interval)
        nxt = now + self.sample_interval
        if nxt <= self.duration:
            self.engine.schedule(nxt, EventKind.MEASUREMENT_FLUSH, self._on_flush)

    def _on_warmup_end(self, now: int) -> None:
        self._area_at_warmup = self.backend.area_at(now)

    def _check(self, ev) -> None:
        self.invariant_checks += 1
        ctl = self.controller
        be = self.backend
        wl = self.workload
        if ctl is not None:
            if ctl.budget_used != be.in_backend_cost:
                raise InvariantViolation(
                    "budget_accounting",
                    f"budget_used={ctl.budget_used} != in_backend_cost={be.in_backend_cost} at t={ev.fire_at}",
                )
            try:
                ctl.check_clamps()
            except AssertionError as exc:
                raise InvariantViolation("controller_clamps", str(exc)) from None
        if be.in_backend_count != len(be.buffer) + len(be.batch) or be.in_backend_cost < 0:
            raise InvariantViolation("backend_gauges", f"count={be.in_backend_count} at t={ev.fire_at}")
        if wl.created != len(self.frontend) + be.in_backend_count + wl.completed:
            raise InvariantViolation(
                "request_conservation",
                f"created={wl.created} frontend={len(self.frontend)} backend={be.in_backend_count} "
                f"completed={wl.completed}",
            )

    # -- run ---------------------------------------------------------------

    def run(self) -> RunResult:
        e = self.engine
        ctl = self.controller
        if self.check_invariants:
            e.post_dispatch_hooks.append(self._check)
        if ctl is not None and isinstance(ctl, QbaCodel):
            self.metrics.trace("budget_capacity").record(0, ctl.budget_capacity)
            self.metrics.trace("interval_current").record(0, ctl.interval_current)
            e.schedule(ctl.first_timer_at(0), EventKind.FAST_LOOP_TIMER, self._on_fast_timer)
        if isinstance(ctl, SfCodel):
            self.metrics.trace("target").record(0, ctl.target)
            e.schedule(ctl.slow.start(0), EventKind.SLOW_LOOP_TIMER, self._on_slow_timer)
        e.schedule(self.warmup, EventKind.MEASUREMENT_FLUSH, self._on_warmup_end)
        e.schedule(self.sample_interval, EventKind.MEASUREMENT_FLUSH, self._on_flush)
        self.workload.start(workload_spec(self.cfg))
        e.run_until(self.duration)
        window = (self.warmup, self.duration)
        summary = self._summarize(window)
        return RunResult(self.cfg, self.metrics, summary, ctl, e, window)

    def _summarize(self, window) -> dict:
        m = self.metrics
        t0, t1 = window
        span_s = (t1 - t0) / US_PER_S
        n = m.completions(window)
        be_lat = m.latency("backend")
        mean_be = be_lat.mean(window) if n else float("nan")
        mean_in_backend = (self.backend.area_at(t1) - self._area_at_warmup) / (t1 - t0)
        rate = n / span_s
        lw = rate * mean_be / US_PER_S
        summary = {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.cfg.source,
            "seed": self.cfg["run"]["seed"],
            "admission_kind": self.cfg["admission"]["kind"] if self.controller is not None else "none",
            "window_us": [t0, t1],
            "completed": n,
            "latency_us": {d: m.latency(d).summary(window) for d in ("frontend", "backend", "total")},
            "throughput_cost_per_s": m.throughput(window),
            "throughput_requests_per_s": rate,
            "little": {
                "mean_in_backend": mean_in_backend,
                "completion_rate_per_s": rate,
                "mean_backend_latency_us": mean_be,
                "rate_times_latency": lw,
                "rel_error": abs(mean_in_backend - lw) / lw if lw else float("nan"),
            },
            "controller": self._controller_summary(window),
            "engine": {
                "scheduled": self.engine.scheduled,
                "dispatched": self.engine.dispatched,
                "cancelled": self.engine.cancelled,
                "pending": self.engine.pending,
                "backend_batches": self.backend.batches,
            },
            "invariants_checked": self.check_invariants,
            "invariant_checks": self.invariant_checks,
            "config": self.cfg.data,
        }
        return summary

    def _controller_summary(self, window) -> dict:
        ctl = self.controller
        if ctl is None:
            return {}
        out: dict = {"kind": ctl.kind}
        if isinstance(ctl, StaticBudget):
            out["budget_capacity"] = ctl.budget_capacity
        if isinstance(ctl, QbaCodel):
            cap = self.metrics.trace("budget_capacity").window(window)
            out.update({
                "final_budget_capacity": ctl.budget_capacity,
                "mean_budget_capacity": float(cap.mean()) if cap.size else None,
                "fast_steps": ctl.steps,
                "violations": ctl.violations,
                "empty_windows": ctl.empty_windows,
                "final_target_us": ctl.target,
            })
        if isinstance(ctl, SfCodel):
            slow = ctl.slow
            steps = [s for s in slow.steps if window[0] <= s.t < window[1]]
            targets = np.array([s.target for s in steps]) if steps else np.zeros(0)
            out.update({
                "slow_steps": len(slow.steps),
                "fits": slow.fits,
                "fit_skips": slow.fit_skips,
                "fit_skip_rate_window": (sum(s.status != "fit" for s in steps) / len(steps)) if steps else None,
                "mean_target_us_window": float(targets.mean()) if steps else None,
                "std_target_us_window": float(targets.std()) if steps else None,
                "last_fit": None if slow.last_fit is None else {"a": slow.last_fit.a, "b": slow.last_fit.b},
            })
        return out


def run_scenario(cfg: ScenarioConfig, **kw) -> RunResult:
    return Simulation(cfg, **kw).run()
