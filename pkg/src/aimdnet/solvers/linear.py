"""Scalar reduction for the line network.

Class 0 crosses every node; class ``j`` uses node ``j-1`` alone. With
``b = beta_0(u)`` every node load is a non-increasing function ``psi_j(b)``,
so the whole system collapses to ``b = beta_0(psi_1(b), ..., psi_J(b))``.
"""

from __future__ import annotations

import math

import numpy as np

from ..equilibrium import alpha, phi_all
from ..model import NetworkModel, check_model
from ._common import FixedPointResult, PreconditionError, SolverOptions, make_result, solve_increasing


def solve_linear(model: NetworkModel, opts: SolverOptions | None = None) -> FixedPointResult:
    opts = opts or SolverOptions()
    if model.topology != "linear":
        raise PreconditionError("solve_linear needs a linear-tagged model")
    check_model(model)
    J = model.J
    alphas = alpha(model)
    tol = opts.inner_tol

    def phi_node(j, x):
        # class j + 1 lives on node j only
        u = [0.0] * J
        u[j] = x
        beta = model.loss[j + 1](u)
        return math.inf if beta <= 0 else alphas[j + 1] / math.sqrt(beta)

    def inv_phibar(j, v):
        # x - phi_j(x) is increasing, negative at 0 and unbounded
        return solve_increasing(lambda x: x - phi_node(j, x) - v, 0.0, tol, what=f"node {j}")

    def psi(b):
        v = alphas[0] / math.sqrt(b)
        return [inv_phibar(j, v) for j in range(J)]

    def outer(b):
        if b <= 0:
            return -math.inf
        return b - model.loss[0](psi(b))

    lo = max(model.loss[0].delta, 0.0)
    beta_star = solve_increasing(outer, lo, tol, what="class 0 loss rate", max_doublings=64)
    u = np.array(psi(beta_star))
    z = phi_all(model, u)
    return make_result(model, z, "linear", 1, converged=True, unique_certified=True,
                       aux={"beta0": beta_star})
