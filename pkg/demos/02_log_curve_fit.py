"""
Fitting throughput = a + b ln(latency)
======================================

The slow loop fits a logarithmic curve to (target, throughput) pairs. Here we
fit noisy points from a known curve, once with well spread latencies and once
with latencies bunched together.
"""

import numpy as np

from sfcodel import fit_log_curve, eval_slope
from sfcodel.estimation import optimal_for_slope

rng = np.random.default_rng(7)

x = rng.uniform(1, 100, 50)
y = 1 + 3 * np.log(x) + rng.normal(0, 0.5, 50)
fit = fit_log_curve(x, y)
print(f"spread samples:       f(x) = {fit.a:.2f} + {fit.b:.2f} ln(x)   rms {fit.residual_rms:.2f}")

x_narrow = rng.uniform(40, 60, 50)
y_narrow = 1 + 3 * np.log(x_narrow) + rng.normal(0, 0.5, 50)
narrow = fit_log_curve(x_narrow, y_narrow)
print(f"concentrated samples: f(x) = {narrow.a:.2f} + {narrow.b:.2f} ln(x)")

# how much the slope estimate wanders from seed to seed
def slope_spread(lo, hi, trials=200):
    bs = []
    for seed in range(trials):
        r = np.random.default_rng(seed)
        xs = r.uniform(lo, hi, 50)
        bs.append(fit_log_curve(xs, 1 + 3 * np.log(xs) + r.normal(0, 0.5, 50)).b)
    return np.std(bs)

print(f"std of b over seeds: spread {slope_spread(1, 100):.3f}, concentrated {slope_spread(40, 60):.3f}")

# The optimum is where the tangent slope equals the chosen slope: b / slope.
for slope in (0.5, 1, 5):
    t = optimal_for_slope(fit, slope)
    print(f"slope {slope:>3}: optimal x = {t:.3f}, f'(x) = {eval_slope(fit, t):.3f}")

# Bunched samples make b unreliable, which is why the installed target is a
# noisy draw around the optimum rather than the optimum itself.
