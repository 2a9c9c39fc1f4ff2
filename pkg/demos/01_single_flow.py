"""A single AIMD flow: stationary law against an exact simulation.

Run with ``python demos/01_single_flow.py``.
"""

import numpy as np

from aimdnet import StationaryLaw, throughput_coefficient
from aimdnet.simulator import SimOptions, chisquare_stationary, simulate_single

print("Throughput coefficient c(r)")
for r in (0.0, 0.25, 0.5, 0.75, 0.9):
    print(f"  r = {r:4.2f}   c(r) = {throughput_coefficient(r):.12f}")

# a flow growing at rate a = 1, losses at rate beta * w with beta = 1, halving at each loss
a, beta, r = 1.0, 1.0, 0.5
law = StationaryLaw(r, a / beta)
print(f"\nStationary mean for a={a}, beta={beta}, r={r}: {law.mean:.6f}")

opts = SimOptions(horizon=1e5, seed=0, sample_interval=5.0)
sim = simulate_single(a, beta, r, w0=0.0, opts=opts)
mean = sim.class_means[0]
se = sim.standard_errors["class_means"][0]
print(f"Simulated time average:  {mean:.6f} +/- {se:.6f}   ({sim.event_count} losses)")

stat, p = chisquare_stationary(sim.samples[0], r, a / beta, bins=40)
print(f"Chi-square against the stationary density: {stat:.1f} on 39 dof, p = {p:.3f}")

# coarse side-by-side view of the time-weighted histogram and the density
edges, masses = sim.histograms[0]
width = edges[1] - edges[0]
print("\n      w    simulated   density")
for i in range(0, len(masses) - 1, 20):
    mid = 0.5 * (edges[i] + edges[i + 1])
    print(f"  {mid:6.3f}   {masses[i] / width:9.5f}   {law.density(mid):8.5f}")

q = law.ppf(np.array([0.05, 0.5, 0.95]))
print(f"\nQuantiles 5/50/95%: {np.round(q, 4).tolist()}")
