"""
Peaks over threshold on a plain sample
======================================

The detector is built from a small extreme-value toolkit that also works on
any one-dimensional sample.
"""

import numpy as np

from spade import GpdParams, gpd_cdf, gpd_quantile, pot_fit, tail_probability, tail_quantile
from spade.evt import fit_gpd_mle

rng = np.random.default_rng(1)

# generalized Pareto basics: shape 0 is the exponential, positive shapes are heavy tailed
for xi in (-0.3, 0.0, 0.5):
    p = GpdParams(xi=xi, sigma=1.0)
    print(f"xi={xi:+.1f}  P(Z<=2)={gpd_cdf(p, 2.0):.4f}  99% quantile={gpd_quantile(p, 0.99):.3f}")

# maximum likelihood on exceedances recovers the generating parameters
u = rng.random(20_000)
heavy = (u ** -0.25 - 1.0) / 0.25          # shape 0.25, scale 1
print("fitted:", fit_gpd_mle(heavy))

# a peaks-over-threshold model: empirical body, fitted tail above the 0.9 quantile
sample = rng.lognormal(size=5_000)
model = pot_fit(sample, q=0.9)
print(f"threshold {model.t:.3f}, {model.n_exceed} exceedances of {model.n}")
for z in (1.0, model.t, 10.0, 30.0):
    print(f"  P(Z <= {z:6.3f}) = {tail_probability(model, z):.5f}")
print("99.9% quantile:", tail_quantile(model, 0.999))

# lower tails are handled on the negated sample
low = pot_fit(sample, q=0.9, tail="lower")
v = tail_quantile(low, 0.95)
print(f"95% of the sample lies at or above {v:.4f}; empirical: {np.mean(sample >= v):.3f}")
