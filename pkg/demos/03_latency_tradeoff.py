"""
Latency versus throughput at queue depth 1024
=============================================

Run the 4 KiB and 64 KiB depth-1024 workloads with and without the two-loop
controller, same seed, and compare backend latency and throughput.
"""

from sfcodel import compare, load_config, run_scenario

for preset in ("presets/4k_sfcodel", "presets/64k_sfcodel"):
    cfg = load_config(preset, {"run.check_invariants": False})
    ctl = run_scenario(cfg).summary
    base = run_scenario(cfg.with_overrides({"admission.kind": "unlimited"})).summary
    c = compare(ctl, base)
    red = c["latency_reduction_pct"]["backend"]
    print(preset)
    for name, s in (("no control", base), ("sf_codel", ctl)):
        lat = s["latency_us"]["backend"]
        print(f"  {name:<11} {s['throughput_cost_per_s'] / 1e6:7.1f} MB/s   mean {lat['mean'] / 1e3:7.2f} ms"
              f"   p95 {lat['p95'] / 1e3:7.2f} ms   p99 {lat['p99'] / 1e3:7.2f} ms")
    print(f"  p99 latency down {red['p99']:.0f}%, throughput down {c['throughput_loss_pct']:.1f}%")
    print(f"  mean installed target {ctl['controller']['mean_target_us_window'] / 1e3:.2f} ms")
