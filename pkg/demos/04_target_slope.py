"""
The target slope knob
=====================

One number trades latency for throughput: the slope of the fitted curve at
which the slow loop places its target. Larger slopes stop earlier on the curve.
"""

from sfcodel import load_config, run_scenario

base = load_config("presets/slope_sweep", {"run.check_invariants": False})
print(f"{'slope':>6} {'MB/s':>7} {'mean ms':>8} {'p99 ms':>8} {'target ms':>10}")
for slope in [0.1, 0.5, 1, 5, 10, 20]:
    s = run_scenario(base.with_overrides({"sf_codel.target_slope": slope})).summary
    lat = s["latency_us"]["backend"]
    tgt = s["controller"]["mean_target_us_window"]
    print(f"{slope:>6} {s['throughput_cost_per_s'] / 1e6:>7.1f} {lat['mean'] / 1e3:>8.2f} "
          f"{lat['p99'] / 1e3:>8.2f} {tgt / 1e3:>10.2f}")
