"""Latency recording, exact percentiles, windowed throughput and report export.

Percentiles are nearest-rank over retained samples. Windows are half-open
``[t0, t1)`` on completion stamps, in microseconds.
"""

from __future__ import annotations

import csv
import io
import json
import math
from array import array
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .engine import US_PER_S

SCHEMA_VERSION = 1
DIMENSIONS = ("frontend", "backend", "total")
SUMMARY_STATS = ("count", "mean", "p50", "p95", "p99", "max")
REQUEST_COLUMNS = (
    "id", "size", "cost", "t_created", "t_admitted", "t_backend_done",
    "frontend_us", "backend_us", "total_us",
)
TRACE_COLUMNS = ("t_us", "value")
SLOW_LOOP_COLUMNS = ("t_us", "throughput", "status", "a", "b", "optimal_raw_us", "optimal_us", "target_us")


class NoDataError(ValueError):
    pass


def nearest_rank_index(p: float, n: int) -> int:
    """0-based index of the nearest-rank ``p`` percentile among ``n`` sorted values."""
    if not 0 < p <= 1:
        raise ValueError(f"p must be in (0, 1], got {p}")
    if n < 1:
        raise NoDataError("no samples")
    # round() absorbs float noise such as 0.95 * 100 = 95.00000000000001
    k = math.ceil(round(p * n, 9))
    return min(max(k, 1), n) - 1


def nearest_rank(values, p: float) -> float:
    arr = np.asarray(values)
    k = nearest_rank_index(p, arr.size)
    return arr[np.argpartition(arr, k)[k]].item()


def _window_slice(stamps: np.ndarray, window) -> slice:
    if window is None:
        return slice(0, stamps.size)
    t0, t1 = window
    lo = int(np.searchsorted(stamps, t0, side="left"))
    hi = int(np.searchsorted(stamps, t1, side="left"))
    return slice(lo, hi)


@dataclass
class LatencyRecorder:
    """(stamp, latency) pairs for one latency dimension, stamps nondecreasing."""

    stamps: np.ndarray
    latencies: np.ndarray

    def window(self, window=None) -> np.ndarray:
        return self.latencies[_window_slice(self.stamps, window)]

    def percentile(self, p: float, window=None) -> float:
        vals = self.window(window)
        if vals.size == 0:
            raise NoDataError(f"no latency samples in window {window}")
        return nearest_rank(vals, p)

    def mean(self, window=None) -> float:
        vals = self.window(window)
        if vals.size == 0:
            raise NoDataError(f"no latency samples in window {window}")
        return float(vals.mean())

    def summary(self, window=None) -> dict:
        vals = self.window(window)
        if vals.size == 0:
            return {k: None for k in SUMMARY_STATS}
        s = np.sort(vals)
        return {
            "count": int(s.size),
            "mean": float(s.mean()),
            "p50": float(s[nearest_rank_index(0.50, s.size)]),
            "p95": float(s[nearest_rank_index(0.95, s.size)]),
            "p99": float(s[nearest_rank_index(0.99, s.size)]),
            "max": float(s[-1]),
        }


@dataclass
class TraceSeries:
    name: str
    t: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def record(self, t: int, value) -> None:
        if self.t and t < self.t[-1]:
            raise ValueError(f"trace {self.name}: stamp {t} precedes {self.t[-1]}")
        self.t.append(t)
        self.v.append(value)

    def __len__(self) -> int:
        return len(self.t)

    def window(self, window=None) -> np.ndarray:
        t = np.asarray(self.t)
        v = np.asarray(self.v, dtype=float)
        return v[_window_slice(t, window)]


class MetricsStore:
    def __init__(self) -> None:
        self._id = array("q")
        self._size = array("q")
        self._cost = array("q")
        self._created = array("q")
        self._admitted = array("q")
        self._done = array("q")
        self.traces: dict[str, TraceSeries] = {}
        self._frozen: Optional[dict] = None

    def record_batch(self, batch, now: int) -> None:
        n = len(batch)
        self._id.extend([r.id for r in batch])
        self._size.extend([r.size for r in batch])
        self._cost.extend([r.cost for r in batch])
        self._created.extend([r.t_created for r in batch])
        self._admitted.extend([r.t_admitted for r in batch])
        self._done.extend([now] * n)
        self._frozen = None

    def record_completion(self, r, now: int) -> None:
        self.record_batch([r], now)

    def trace(self, name: str) -> TraceSeries:
        ts = self.traces.get(name)
        if ts is None:
            ts = self.traces[name] = TraceSeries(name)
        return ts

    def _arrays(self) -> dict:
        if self._frozen is None:
            a = {}
            for key, buf in (("id", self._id), ("size", self._size), ("cost", self._cost),
                             ("t_created", self._created), ("t_admitted", self._admitted),
                             ("t_backend_done", self._done)):
                a[key] = np.array(buf, dtype=np.int64)
            a["frontend"] = a["t_admitted"] - a["t_created"]
            a["backend"] = a["t_backend_done"] - a["t_admitted"]
            a["total"] = a["t_backend_done"] - a["t_created"]
            self._frozen = a
        return self._frozen

    @property
    def completed(self) -> int:
        return len(self._done)

    def latency(self, dimension: str) -> LatencyRecorder:
        if dimension not in DIMENSIONS:
            raise KeyError(f"unknown latency dimension {dimension!r}")
        a = self._arrays()
        return LatencyRecorder(a["t_backend_done"], a[dimension])

    def percentile(self, dimension: str, p: float, window=None) -> float:
        return self.latency(dimension).percentile(p, window)

    def completed_cost(self, window=None) -> int:
        a = self._arrays()
        return int(a["cost"][_window_slice(a["t_backend_done"], window)].sum())

    def completions(self, window=None) -> int:
        a = self._arrays()
        s = _window_slice(a["t_backend_done"], window)
        return s.stop - s.start

    def throughput(self, window) -> float:
        """Completed cost per second over ``window``."""
        t0, t1 = window
        if t1 <= t0:
            raise ValueError("window must have positive length")
        return self.completed_cost(window) * US_PER_S / (t1 - t0)

    def request_rows(self) -> Iterable[tuple]:
        a = self._arrays()
        cols = [a[k] for k in ("id", "size", "cost", "t_created", "t_admitted", "t_backend_done",
                               "frontend", "backend", "total")]
        return zip(*(c.tolist() for c in cols))


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def pct_reduction(new: float, base: float) -> Optional[float]:
    if base is None or new is None or base == 0:
        return None
    return 100.0 * (base - new) / base


def compare(summary: dict, baseline: dict) -> dict:
    """Latency reduction and throughput loss of ``summary`` relative to ``baseline``."""
    out = {"latency_reduction_pct": {}, "throughput_loss_pct": None}
    for dim in DIMENSIONS:
        cur = summary["latency_us"][dim]
        base = baseline["latency_us"][dim]
        out["latency_reduction_pct"][dim] = {
            k: pct_reduction(cur[k], base[k]) for k in ("mean", "p95", "p99")
        }
    out["throughput_loss_pct"] = pct_reduction(
        summary["throughput_cost_per_s"], baseline["throughput_cost_per_s"]
    )
    return out


def export(result, out_dir, per_request: bool = False, baseline: Optional[dict] = None) -> dict:
    """Write ``summary.json``, one ``trace_<name>.csv`` per series, ``slow_loop.csv``
    when a slow loop ran, and optionally ``requests.csv``. Returns ``{name: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = dict(result.summary)
    if baseline is not None:
        summary["comparison"] = compare(summary, baseline)
    files = {"summary.json": dumps_json(summary)}
    for name in sorted(result.metrics.traces):
        ts = result.metrics.traces[name]
        files[f"trace_{name}.csv"] = _csv_text(TRACE_COLUMNS, zip(ts.t, ts.v))
    if result.slow_steps is not None:
        rows = [(s.t, s.throughput, s.status, s.a, s.b, s.optimal_raw, s.optimal, s.target)
                for s in result.slow_steps]
        files["slow_loop.csv"] = _csv_text(SLOW_LOOP_COLUMNS, rows)
    if per_request:
        files["requests.csv"] = _csv_text(REQUEST_COLUMNS, result.metrics.request_rows())
    written = {}
    for name, text in files.items():
        p = out / name
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        written[name] = p
    return written
