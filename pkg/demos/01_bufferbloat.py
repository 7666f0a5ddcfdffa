"""
Bufferbloat in a batching backend
=================================

Push more and more outstanding writes at the simulated backend with no
admission control and watch what each doubling buys.
"""

from sfcodel import load_config, run_scenario

base = load_config("presets/bloat_probe")

print(f"{'depth':>6} {'MB/s':>8} {'mean ms':>9} {'p99 ms':>8}")
prev = None
for depth in [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]:
    s = run_scenario(base.with_overrides({"workload.queue_depth": depth})).summary
    mbs = s["throughput_cost_per_s"] / 1e6
    lat = s["latency_us"]["backend"]
    note = ""
    if prev is not None:
        note = f"  throughput x{mbs / prev[0]:.2f}, latency x{lat['mean'] / prev[1]:.2f}"
    print(f"{depth:>6} {mbs:>8.1f} {lat['mean'] / 1e3:>9.2f} {lat['p99'] / 1e3:>8.2f}{note}")
    prev = (mbs, lat["mean"])

# Past the batch size the backend is saturated: extra depth only sits in the
# internal buffer, so latency doubles with every doubling of depth while
# throughput stays put.
