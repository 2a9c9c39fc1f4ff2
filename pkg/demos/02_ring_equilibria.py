"""Equilibria on ring networks, three ways.

Each ring is solved by its dedicated algorithm and by the general
alternating iteration; a multi-start scan looks for other equilibria and the
contraction constant of the two-node ring is estimated numerically.
"""

import time

import numpy as np

from aimdnet import ClassParams, LossRateSpec, ring_full, ring_mixed, ring_two
from aimdnet.solvers import estimate_contraction, scan_multistability, solve, solve_bracket

models = {
    "two-node routes, J=5": ring_two(5, ClassParams(p=0.2)),
    "one or two nodes, J=4": ring_mixed(4, ClassParams(p=0.125)),
    "two nodes + complete route, J=4": ring_full(4, ClassParams(p=0.2)),
    # one class twice as aggressive as the others
    "two-node routes, J=5, a_2 = 2": ring_two(
        5, [ClassParams(a=2.0 if k == 2 else 1.0, p=0.2) for k in range(5)]),
}

for name, model in models.items():
    t0 = time.perf_counter()
    fast = solve(model)
    t_fast = time.perf_counter() - t0
    ref = solve_bracket(model)
    gap = np.max(np.abs(fast.u_star - ref.u_star))
    scan = scan_multistability(model, n_starts=32, seed=0)
    print(name)
    print(f"  u*          = {np.round(fast.u_star, 6).tolist()}")
    print(f"  method      = {fast.method} ({fast.iterations} outer steps, {t_fast * 1e3:.1f} ms)")
    print(f"  vs bracket  = {gap:.1e}   residual {fast.residual:.1e}")
    print(f"  scan        = {scan.n_clusters} cluster(s) from 32 starts")

print("\nContraction constant of the outer map (two-node ring, 8x8 grid on [0,5]^2)")
for delta in (0.1, 1.0, 10.0):
    for coeff in (0.5, 1.0, 4.0):
        m = ring_two(3, ClassParams(), LossRateSpec.route_sum(delta, coeff))
        print(f"  delta={delta:5.1f} coeff={coeff:3.1f}  estimate {estimate_contraction(m):.4f}")
