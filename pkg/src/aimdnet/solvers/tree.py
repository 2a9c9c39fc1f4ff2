"""Leaf-to-root solver for trees where every route starts at the root."""

from __future__ import annotations

import math

import numpy as np

from ..equilibrium import alpha, phi_all
from ..model import NetworkModel, check_model
from ._common import (BracketError, FixedPointResult, PreconditionError, SolverOptions,
                      make_result, solve_increasing)


def solve_tree(model: NetworkModel, opts: SolverOptions | None = None) -> FixedPointResult:
    """Solve the tree equations ``u_H = phi_H(u on root..H) + sum_{children G} u_G``.

    For fixed ancestor loads, the load of node ``G`` solves the scalar
    equation ``u_G = phi_G(ancestors, u_G) + sum_C F_C(ancestors, u_G)``, whose
    right side is non-increasing in ``u_G``; ``F_C`` is the same construction
    one level down. The root equation is solved first and loads are then
    filled in top-down.
    """
    opts = opts or SolverOptions()
    if model.topology != "tree" or model.parent is None:
        raise PreconditionError("solve_tree needs a tree-tagged model")
    check_model(model)
    J = model.J
    parent = model.parent
    children = [[] for _ in range(J)]
    for g, q in enumerate(parent):
        if q >= 0:
            children[q].append(g)
    root = parent.index(-1)
    paths = model.routes
    alphas = alpha(model)
    memo: dict = {}

    def phi(g, vals):
        u = [0.0] * J
        for node, v in zip(paths[g], vals):
            u[node] = v
        beta = model.loss[g](u)
        return math.inf if beta <= 0 else alphas[g] / math.sqrt(beta)

    def F(g, anc):
        key = (g, anc)
        if key in memo:
            return memo[key]

        def eq(x):
            vals = anc + (x,)
            return x - phi(g, vals) - sum(F(c, vals) for c in children[g])

        try:
            x = solve_increasing(eq, 0.0, opts.inner_tol, what=f"node {g}")
        except BracketError as exc:
            raise BracketError(f"tree node {g}: {exc}") from exc
        memo[key] = x
        return x

    u = np.zeros(J)
    order = [root]
    for g in order:
        anc = tuple(u[n] for n in paths[g][:-1])
        u[g] = F(g, anc)
        order.extend(children[g])
    z = phi_all(model, u)
    return make_result(model, z, "tree", len(memo), converged=True, unique_certified=True,
                       aux={"node_solves": len(memo)})
