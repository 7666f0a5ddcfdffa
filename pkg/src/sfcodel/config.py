"""Scenario files: YAML with sections ``run``, ``workload``, ``backend``,
``admission``, ``sf_codel``, ``output`` and an optional ``sweep`` used by
``sfcodel sweep`` when no axis is given on the command line.

``resolve`` fills defaults and validates; the resolved mapping is what gets
echoed into every summary. Diagnostics carry the source line when known.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .admission import KiB, MiB, cost_of

ADMISSION_KINDS = ("unlimited", "static", "qba_codel", "sf_codel")
REQUIRED_SECTIONS = ("run", "workload", "backend", "admission")
OUTPUT_DIR_ENV = "SFCODEL_OUTPUT_DIR"

DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {
        "duration_s": None,
        "seed": 1,
        "warmup_s": None,  # default: 10% of duration
        "sample_interval_ms": 100.0,
        "check_invariants": True,
        "record_log": False,
    },
    "workload": {
        "phases": None,
        "request_size": 4096,
        "queue_depth": 1024,
        "think_time_us": 0,
        "think_time_dist": "fixed",
        "cost_fixed": 0,
    },
    "backend": {
        "batch_max": 64,
        "t_fixed_us": 500.0,
        "t_per_byte_us": 0.01,
        "noise_sigma": 0.3,
    },
    "admission": {
        "kind": "unlimited",
        "capacity": None,
        "target_ms": 5.0,
        "interval_initial_ms": 100.0,
        "interval_min_ms": 1.0,
        "budget_initial": None,  # default: budget_max
        "budget_increment": 64 * KiB,
        "budget_min": None,  # default: cost of the largest request
        "budget_max": 64 * MiB,
        "alpha": 0.5,
    },
    "sf_codel": {
        "target_slope": 5.0,
        "slow_interval_s": 2.0,
        "history_len": 100,
        "noise_sigma": 0.25,
        "target_floor_ms": 1.0,
        "target_ceiling_ms": 10_000.0,
        "min_fit_points": 8,
        "min_distinct_targets": 4,
        "latency_unit_us": 1000.0,
        "throughput_unit": 125000.0,  # 1 Mbit/s of cost
        "nonpositive_b": "floor",
        "initial_target_ms": None,  # default: admission.target_ms
    },
    "output": {
        "dir": "out",
        "per_request": False,
    },
    "sweep": {
        "axis": None,
        "values": None,
        "seed_policy": "same",
    },
}
PHASE_KEYS = ("duration_s", "request_size", "queue_depth")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


def _line_map(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line where that key appears."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                path = f"{prefix}[{i}]"
                lines[path] = v.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return lines


@dataclass
class ScenarioConfig:
    data: dict
    source: Optional[str] = None
    raw: Optional[dict] = None

    def __getitem__(self, key):
        return self.data[key]

    def get(self, dotted: str):
        node: Any = self.data
        for part in dotted.split("."):
            node = node[part]
        return node

    @property
    def duration_us(self) -> int:
        return int(round(self.data["run"]["duration_s"] * 1e6))

    @property
    def warmup_us(self) -> int:
        return int(round(self.data["run"]["warmup_s"] * 1e6))

    def with_overrides(self, overrides: dict[str, Any]) -> "ScenarioConfig":
        raw = copy.deepcopy(self.raw if self.raw is not None else self.data)
        for key, value in overrides.items():
            set_dotted(raw, key, value)
        return resolve(raw, source=self.source)


def _number(value, path, lines, source, *, positive=False, nonneg=False, integer=False):
    line = lines.get(path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}", line, source)
    if integer and not isinstance(value, int) and not float(value).is_integer():
        raise ConfigError(f"{path} must be an integer, got {value!r}", line, source)
    if positive and not value > 0:
        raise ConfigError(f"{path} must be > 0, got {value!r}", line, source)
    if nonneg and value < 0:
        raise ConfigError(f"{path} must be >= 0, got {value!r}", line, source)
    return int(value) if integer else float(value)


def set_dotted(data: dict, key: str, value) -> None:
    """Set ``a.b.c``; ``workload.queue_depth``/``request_size`` also apply to every phase."""
    parts = key.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key must look like section.name, got {key!r}")
    section, name = parts
    if section not in DEFAULTS or name not in DEFAULTS[section]:
        raise ConfigError(f"unknown config key {key!r}")
    data.setdefault(section, {})
    if data[section] is None:
        data[section] = {}
    data[section][name] = value
    if section == "workload" and name in PHASE_KEYS and data[section].get("phases"):
        for ph in data[section]["phases"]:
            ph[name] = value


def resolve(raw: Any, source: Optional[str] = None, lines: Optional[dict] = None) -> ScenarioConfig:
    lines = lines or {}
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping of sections", 1, source)
    for sec in raw:
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section {sec!r}", lines.get(str(sec)), source)
    for sec in REQUIRED_SECTIONS:
        if sec not in raw:
            raise ConfigError(f"missing required section {sec!r}", None, source)

    out: dict[str, dict] = {}
    for sec, defaults in DEFAULTS.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {sec!r} must be a mapping", lines.get(sec), source)
        for k in given:
            if k not in defaults:
                raise ConfigError(f"unknown key {sec}.{k}", lines.get(f"{sec}.{k}"), source)
        merged = copy.deepcopy(defaults)
        merged.update(copy.deepcopy(given))
        out[sec] = merged

    adm = out["admission"]
    if adm["kind"] not in ADMISSION_KINDS:
        raise ConfigError(
            f"admission.kind must be one of {', '.join(ADMISSION_KINDS)}, got {adm['kind']!r}",
            lines.get("admission.kind"), source,
        )
    if adm["kind"] == "sf_codel" and "sf_codel" not in raw:
        raise ConfigError("admission.kind sf_codel requires an sf_codel section", lines.get("admission.kind"), source)

    def num(path, **kw):
        sec, name = path.split(".")
        out[sec][name] = _number(out[sec][name], path, lines, source, **kw)

    # workload phases
    wl = out["workload"]
    phases = wl["phases"]
    if phases is None:
        num("workload.request_size", positive=True, integer=True)
        num("workload.queue_depth", positive=True, integer=True)
        phases = [{"duration_s": out["run"]["duration_s"], "request_size": wl["request_size"],
                   "queue_depth": wl["queue_depth"]}]
        if phases[0]["duration_s"] is None:
            raise ConfigError("run.duration_s is required", lines.get("run"), source)
    if not isinstance(phases, list) or not phases:
        raise ConfigError("workload.phases must be a nonempty list", lines.get("workload.phases"), source)
    clean = []
    for i, ph in enumerate(phases):
        p = f"workload.phases[{i}]"
        if not isinstance(ph, dict):
            raise ConfigError(f"{p} must be a mapping", lines.get(p), source)
        extra = set(ph) - set(PHASE_KEYS)
        if extra:
            raise ConfigError(f"{p}: unknown keys {sorted(extra)}", lines.get(p), source)
        missing = set(PHASE_KEYS) - set(ph)
        if missing:
            raise ConfigError(f"{p}: missing keys {sorted(missing)}", lines.get(p), source)
        clean.append({
            "duration_s": _number(ph["duration_s"], f"{p}.duration_s", lines, source, positive=True),
            "request_size": _number(ph["request_size"], f"{p}.request_size", lines, source, positive=True, integer=True),
            "queue_depth": _number(ph["queue_depth"], f"{p}.queue_depth", lines, source, positive=True, integer=True),
        })
    wl["phases"] = clean
    wl["request_size"] = clean[0]["request_size"]
    wl["queue_depth"] = clean[0]["queue_depth"]
    num("workload.think_time_us", nonneg=True, integer=True)
    num("workload.cost_fixed", nonneg=True, integer=True)
    if wl["think_time_dist"] not in ("fixed", "exponential"):
        raise ConfigError("workload.think_time_dist must be fixed or exponential",
                          lines.get("workload.think_time_dist"), source)

    run = out["run"]
    if run["duration_s"] is None:
        run["duration_s"] = sum(ph["duration_s"] for ph in clean)
    num("run.duration_s", positive=True)
    num("run.seed", nonneg=True, integer=True)
    if run["warmup_s"] is None:
        run["warmup_s"] = 0.1 * run["duration_s"]
    num("run.warmup_s", nonneg=True)
    if not run["duration_s"] > run["warmup_s"]:
        raise ConfigError("run.duration_s must exceed run.warmup_s", lines.get("run.warmup_s"), source)
    num("run.sample_interval_ms", positive=True)
    run["check_invariants"] = bool(run["check_invariants"])
    run["record_log"] = bool(run["record_log"])

    num("backend.batch_max", positive=True, integer=True)
    num("backend.t_fixed_us", positive=True)
    num("backend.t_per_byte_us", positive=True)
    num("backend.noise_sigma", nonneg=True)

    max_cost = cost_of(max(ph["request_size"] for ph in clean), wl["cost_fixed"])
    if adm["kind"] == "static":
        if adm["capacity"] is None:
            raise ConfigError("admission.capacity is required for kind static", lines.get("admission"), source)
        num("admission.capacity", positive=True, integer=True)
    if adm["kind"] in ("qba_codel", "sf_codel"):
        if adm["budget_min"] is None:
            adm["budget_min"] = max_cost
        num("admission.target_ms", positive=True)
        num("admission.interval_initial_ms", positive=True)
        num("admission.interval_min_ms", positive=True)
        num("admission.budget_increment", positive=True, integer=True)
        num("admission.budget_min", positive=True, integer=True)
        num("admission.budget_max", positive=True, integer=True)
        if adm["budget_initial"] is None:
            adm["budget_initial"] = adm["budget_max"]
        num("admission.budget_initial", positive=True, integer=True)
        num("admission.alpha", positive=True)
        if adm["alpha"] > 1:
            raise ConfigError("admission.alpha must be <= 1", lines.get("admission.alpha"), source)
        if adm["interval_min_ms"] > adm["interval_initial_ms"]:
            raise ConfigError("admission.interval_min_ms exceeds interval_initial_ms",
                              lines.get("admission.interval_min_ms"), source)
        if adm["budget_min"] > adm["budget_max"]:
            raise ConfigError("admission.budget_min exceeds budget_max", lines.get("admission.budget_min"), source)

    sf = out["sf_codel"]
    num("sf_codel.target_slope", positive=True)
    num("sf_codel.slow_interval_s", positive=True)
    num("sf_codel.history_len", positive=True, integer=True)
    num("sf_codel.noise_sigma", nonneg=True)
    num("sf_codel.target_floor_ms", positive=True)
    num("sf_codel.target_ceiling_ms", positive=True)
    num("sf_codel.min_fit_points", positive=True, integer=True)
    num("sf_codel.min_distinct_targets", positive=True, integer=True)
    num("sf_codel.latency_unit_us", positive=True)
    num("sf_codel.throughput_unit", positive=True)
    if sf["nonpositive_b"] not in ("floor", "hold"):
        raise ConfigError("sf_codel.nonpositive_b must be floor or hold", lines.get("sf_codel.nonpositive_b"), source)
    if sf["initial_target_ms"] is None:
        sf["initial_target_ms"] = adm["target_ms"]
    num("sf_codel.initial_target_ms", positive=True)
    if sf["history_len"] < 2:
        raise ConfigError("sf_codel.history_len must be >= 2", lines.get("sf_codel.history_len"), source)
    if sf["target_floor_ms"] > sf["target_ceiling_ms"]:
        raise ConfigError("sf_codel.target_floor_ms exceeds target_ceiling_ms",
                          lines.get("sf_codel.target_floor_ms"), source)

    sw = out["sweep"]
    if sw["axis"] is not None and not isinstance(sw["axis"], str):
        raise ConfigError("sweep.axis must be a dotted key", lines.get("sweep.axis"), source)
    if sw["values"] is not None:
        if not isinstance(sw["values"], list):
            raise ConfigError("sweep.values must be a list", lines.get("sweep.values"), source)
        for i, v in enumerate(sw["values"]):
            _number(v, f"sweep.values[{i}]", lines, source)
    if sw["seed_policy"] not in ("same", "derived"):
        raise ConfigError("sweep.seed_policy must be same or derived", lines.get("sweep.seed_policy"), source)

    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    out["output"]["dir"] = env_dir if env_dir else str(out["output"]["dir"])
    out["output"]["per_request"] = bool(out["output"]["per_request"])
    return ScenarioConfig(out, source, copy.deepcopy(raw))


def preset_path(name: str) -> Optional[Path]:
    stem = Path(name).name
    if stem.endswith(".yaml"):
        stem = stem[:-5]
    ref = resources.files("sfcodel") / "presets" / f"{stem}.yaml"
    if ref.is_file():
        return Path(str(ref))
    return None


def preset_names() -> list[str]:
    root = resources.files("sfcodel") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_text(text: str, source: Optional[str] = None) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"parse error: {getattr(exc, 'problem', None) or exc}", line, source) from None
    return resolve(raw, source=source, lines=_line_map(text))


def load_config(path, overrides: Optional[dict[str, Any]] = None) -> ScenarioConfig:
    """Load a scenario file, or a bundled preset by name (``presets/4k_sfcodel``)."""
    p = Path(path)
    if not p.is_file():
        found = preset_path(str(path))
        if found is None:
            raise ConfigError(f"no such scenario file or preset: {path}")
        p = found
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}", None, str(path)) from None
    cfg = load_text(text, source=str(path))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, _, value = item.partition("=")
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError:
        parsed = value
    return key.strip(), parsed
