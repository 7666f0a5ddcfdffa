"""Command line: ``sfcodel run``, ``sfcodel sweep`` and ``sfcodel fit``.

Exit status: 0 on success, 2 for configuration or input errors, 3 when a
run-time invariant breaks (the message names it).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULTS, ConfigError, ScenarioConfig, load_config, parse_override, preset_names
from .estimation import DegenerateFitError, DomainError, fit_log_curve, optimal_for_slope
from .metrics import compare, export
from .simulation import InvariantViolation, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

COMPARISON_COLUMNS = (
    "axis", "value", "seed", "completed", "throughput_cost_per_s", "throughput_requests_per_s",
    "backend_mean_us", "backend_p95_us", "backend_p99_us",
    "frontend_mean_us", "total_mean_us", "total_p95_us", "total_p99_us",
    "mean_target_us", "fit_skip_rate",
)


def _overrides(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for item in items or ():
        k, v = parse_override(item)
        out[k] = v
    return out


def derive_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1_000 + index,))
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)


def _one_line(summary: dict) -> str:
    be = summary["latency_us"]["backend"]
    if not summary["completed"]:
        return "no completions in the summary window"
    return (
        f"{summary['admission_kind']}: completed={summary['completed']} "
        f"throughput={summary['throughput_cost_per_s'] / 1e6:.2f} MB/s "
        f"backend mean={be['mean'] / 1e3:.2f} ms p95={be['p95'] / 1e3:.2f} ms p99={be['p99'] / 1e3:.2f} ms"
    )


def execute(cfg: ScenarioConfig, out_dir: Path, per_request: bool, baseline: Optional[dict] = None):
    result = run_scenario(cfg)
    export(result, out_dir, per_request=per_request, baseline=baseline)
    return result


def cmd_run(args) -> int:
    overrides = _overrides(args.set)
    if args.no_invariants:
        overrides["run.check_invariants"] = False
    cfg = load_config(args.config, overrides)
    out = Path(args.out or cfg["output"]["dir"])
    per_request = args.per_request or cfg["output"]["per_request"]

    baseline = None
    if args.baseline:
        baseline = json.loads(Path(args.baseline).read_text(encoding="utf-8"))
    elif args.with_baseline:
        base_cfg = cfg.with_overrides({**overrides, "admission.kind": "unlimited"})
        base = execute(base_cfg, out / "baseline", per_request)
        baseline = base.summary
        print("baseline  " + _one_line(baseline))

    result = execute(cfg, out, per_request, baseline)
    print(_one_line(result.summary))
    if baseline is not None:
        c = compare(result.summary, baseline)
        red = c["latency_reduction_pct"]["backend"]
        print(
            f"vs baseline: backend latency reduction mean={red['mean']:.1f}% p95={red['p95']:.1f}% "
            f"p99={red['p99']:.1f}%, throughput loss={c['throughput_loss_pct']:.1f}%"
        )
    print(f"reports written to {out}")
    return EXIT_OK


def _sweep_one(job):
    cfg_data, source, out_dir, per_request = job
    cfg = ScenarioConfig(cfg_data, source)
    return execute(cfg, Path(out_dir), per_request).summary


def _comparison_row(axis, value, summary) -> list:
    lat = summary["latency_us"]
    ctl = summary.get("controller", {})
    return [
        axis, value, summary["seed"], summary["completed"],
        summary["throughput_cost_per_s"], summary["throughput_requests_per_s"],
        lat["backend"]["mean"], lat["backend"]["p95"], lat["backend"]["p99"],
        lat["frontend"]["mean"], lat["total"]["mean"], lat["total"]["p95"], lat["total"]["p99"],
        ctl.get("mean_target_us_window"), ctl.get("fit_skip_rate_window"),
    ]


def sweep_configs(cfg: ScenarioConfig, axis: str, values: Sequence, seed_policy: str,
                  overrides: Optional[dict] = None) -> list[ScenarioConfig]:
    if not values:
        raise ConfigError("sweep needs at least one value")
    section, _, name = axis.partition(".")
    if section not in DEFAULTS or name not in DEFAULTS[section]:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    current = cfg.data[section][name]
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise ConfigError(f"sweep axis {axis!r} is not a numeric setting")
    if seed_policy not in ("same", "derived"):
        raise ConfigError("seed policy must be 'same' or 'derived'")
    seed = cfg["run"]["seed"]
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"sweep value {v!r} is not numeric")
        ov = dict(overrides or {})
        ov[axis] = v
        if seed_policy == "derived":
            ov["run.seed"] = derive_seed(seed, i)
        out.append(cfg.with_overrides(ov))
    return out


def cmd_sweep(args) -> int:
    overrides = _overrides(args.set)
    cfg = load_config(args.config, overrides)
    sweep = cfg["sweep"]
    axis = args.axis or sweep["axis"]
    if not axis:
        raise ConfigError("no sweep axis given (--axis or sweep.axis)")
    if args.values is not None:
        values = [parse_override(f"v={v}")[1] for v in args.values.split(",") if v.strip()]
    else:
        values = list(sweep["values"] or [])
    policy = args.seed_policy or sweep["seed_policy"]
    configs = sweep_configs(cfg, axis, values, policy, overrides)

    out = Path(args.out or cfg["output"]["dir"])
    per_request = args.per_request or cfg["output"]["per_request"]
    jobs = [(c.data, c.source, str(out / f"{axis}={v}"), per_request) for c, v in zip(configs, values)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(j) for j in jobs]

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for v, s in zip(values, summaries):
            w.writerow(_comparison_row(axis, v, s))
    for v, s in zip(values, summaries):
        print(f"{axis}={v}: " + _one_line(s))
    print(f"comparison table written to {out / 'comparison.csv'}")
    return EXIT_OK


def read_xy_csv(path) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ConfigError("CSV needs a header with columns x,y", 1, str(path))
        for lineno, row in enumerate(reader, start=2):
            try:
                xs.append(float(row["x"]))
                ys.append(float(row["y"]))
            except (TypeError, ValueError):
                raise ConfigError(f"non-numeric x/y value: {row}", lineno, str(path)) from None
    return xs, ys


def cmd_fit(args) -> int:
    xs, ys = read_xy_csv(args.csv)
    try:
        fit = fit_log_curve(xs, ys)
    except (DegenerateFitError, DomainError) as exc:
        print(f"error: cannot fit {args.csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"a={fit.a:.6g}")
    print(f"b={fit.b:.6g}")
    print(f"residual_rms={fit.residual_rms:.6g}")
    print(f"n={fit.n}")
    if args.slope is not None:
        if fit.b <= 0:
            print("error: fitted b <= 0, no positive optimum", file=sys.stderr)
            return EXIT_CONFIG
        print(f"optimal_target={optimal_for_slope(fit, args.slope):.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfcodel", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario YAML file or bundled preset (e.g. presets/4k_sfcodel)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", help="output directory (default: output.dir or $SFCODEL_OUTPUT_DIR)")
    common.add_argument("--per-request", action="store_true", help="also write requests.csv")

    r = sub.add_parser("run", parents=[common], help="run one scenario")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--baseline", help="summary.json of a baseline run to compare against")
    g.add_argument("--with-baseline", action="store_true",
                   help="also run the same scenario without admission control and compare")
    r.add_argument("--no-invariants", action="store_true",
                   help="skip the per-event invariant checks (faster; exit 0 then proves less)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run a scenario once per value of one setting")
    s.add_argument("--axis", help="dotted config key, e.g. sf_codel.target_slope")
    s.add_argument("--values", help="comma-separated values")
    s.add_argument("--seed-policy", choices=("same", "derived"))
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit y = a + b*ln(x) to a CSV with columns x,y")
    f.add_argument("csv")
    f.add_argument("--slope", type=float, help="also print b / slope")
    f.set_defaults(func=cmd_fit)

    sub.add_parser("presets", help="list bundled presets").set_defaults(
        func=lambda a: print("\n".join(preset_names())) or EXIT_OK
    )
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
