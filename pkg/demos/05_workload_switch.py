"""
Following a workload change
===========================

The workload switches from 4 KiB to 64 KiB writes halfway through. Nothing
tells the controller; the regression over recent samples notices on its own.
"""

import numpy as np

from sfcodel import load_config, run_scenario

cfg = load_config("presets/workload_switch", {"run.check_invariants": False})
res = run_scenario(cfg)

mid = cfg["workload"]["phases"][0]["duration_s"]
print(f"workload switches at t={mid:.0f}s")
print(f"{'t (s)':>6} {'target ms':>10} {'fits':>5}")
steps = res.slow_steps
for t0 in range(0, int(cfg["run"]["duration_s"]), 20):
    chunk = [s for s in steps if t0 * 1e6 <= s.t < (t0 + 20) * 1e6]
    if chunk:
        tgt = np.mean([s.target for s in chunk]) / 1e3
        fits = sum(s.status == "fit" for s in chunk)
        print(f"{t0:>6} {tgt:>10.2f} {fits:>2}/{len(chunk)}")

# Larger requests have a larger latency floor, so the throughput curve's
# useful region moves right and the installed target follows it.
