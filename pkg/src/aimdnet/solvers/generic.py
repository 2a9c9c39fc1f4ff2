"""Solvers for a general allocation matrix: the alternating bracketing
iteration and damped Picard iteration."""

from __future__ import annotations

import numpy as np

from ..equilibrium import load_map, loads, residual
from ..model import NetworkModel, check_model
from ._common import FixedPointResult, PreconditionError, SolverOptions, make_result


def bracket_iterate(phi, z0, opts: SolverOptions, converged_at, method: str,
                    model: NetworkModel, record: bool = False) -> FixedPointResult:
    """Run ``z(n) = phi(z(n-1))`` from ``z0`` for an antitone ``phi``.

    Even iterates increase and odd iterates decrease; the run stops once
    consecutive iterates are within ``tol`` and ``converged_at(midpoint)``
    holds. ``aux["sandwich_violations"]`` counts steps that broke the ordering
    beyond rounding, which only happens when ``phi`` is not antitone.
    """
    prev2 = None
    prev = np.asarray(z0, dtype=float)
    cur = phi(prev)
    if not np.all(np.isfinite(cur)):
        raise FloatingPointError("Phi(z0) is not finite")
    history = [prev.copy(), cur.copy()] if record else None
    violations = 0
    n = 1
    while True:
        gap = float(np.max(np.abs(cur - prev)))
        lower, upper = (prev, cur) if n % 2 else (cur, prev)
        if gap < opts.tol:
            mid = 0.5 * (lower + upper)
            if converged_at(mid):
                aux = {"sandwich_violations": violations}
                if record:
                    aux["history"] = history
                return make_result(model, mid, method, n, converged=True,
                                   unique_certified=True, bracket=(lower.copy(), upper.copy()),
                                   aux=aux, message="bracket collapsed")
        if n >= opts.max_iter:
            aux = {"sandwich_violations": violations, "gap": gap}
            if record:
                aux["history"] = history
            return make_result(model, 0.5 * (lower + upper), method, n, converged=False,
                               unique_certified=False, bracket=(lower.copy(), upper.copy()),
                               aux=aux, message="bracket did not collapse: possible "
                                                "multiple equilibria or slow convergence")
        nxt = phi(cur)
        n += 1
        if not np.all(np.isfinite(nxt)):
            raise FloatingPointError(f"iterate {n} is not finite")
        slack = 1e-12 * (1.0 + np.abs(nxt))
        if prev2 is None:
            # z(2) must sit between z(0) and z(1)
            ok = np.all(nxt >= prev - slack) and np.all(nxt <= cur + slack)
        else:
            # new iterate lies between its same-parity predecessor and the last iterate
            lo_, hi_ = (prev, cur) if n % 2 == 0 else (cur, prev)
            ok = np.all(nxt >= lo_ - slack) and np.all(nxt <= hi_ + slack)
        violations += not ok
        prev2, prev, cur = prev, cur, nxt
        if record:
            history.append(cur.copy())


def solve_bracket(model: NetworkModel, opts: SolverOptions | None = None, z0=None,
                  record: bool = False) -> FixedPointResult:
    """Alternating iteration ``z(n) = Phi(z(n-1))`` from ``z(0) = 0``.

    Even iterates ascend to a lower limit and odd iterates descend to an upper
    limit; every fixed point lies between them. When they meet the fixed point
    is unique. Otherwise the bracket is returned with
    ``unique_certified=False``; this is a finding, not an error.

    A custom start ``z0`` must satisfy ``z0 <= Phi(z0)`` and
    ``z0 <= Phi(Phi(z0))``.
    """
    opts = opts or SolverOptions()
    try:
        check_model(model, for_generic=z0 is None)
    except PreconditionError:
        raise
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    if z0 is None:
        z0 = np.zeros(model.K)
        betas0 = model.betas(np.zeros(model.J))
        if np.any(betas0 <= 0):
            raise PreconditionError(
                f"loss rate vanishes at zero load for classes {np.flatnonzero(betas0 <= 0).tolist()}")
    else:
        z0 = np.asarray(z0, dtype=float)
        if z0.shape != (model.K,) or np.any(z0 < 0):
            raise PreconditionError("z0 must be a nonnegative vector of length K")
        one = load_map(model, z0)
        two = load_map(model, one)
        if np.any(z0 > one) or np.any(z0 > two):
            raise PreconditionError("z0 must satisfy z0 <= Phi(z0) and z0 <= Phi(Phi(z0))")

    def phi(z):
        return load_map(model, z)

    def done(z):
        return residual(model, loads(model, z)) <= opts.tol

    return bracket_iterate(phi, z0, opts, done, "bracket", model, record)


def solve_damped(model: NetworkModel, z_init, opts: SolverOptions | None = None) -> FixedPointResult:
    """Picard iteration ``z <- (1 - theta) z + theta Phi(z)``.

    Says nothing about uniqueness; ``unique_certified`` is always False.
    Exhausting ``max_iter`` returns the last iterate with ``converged=False``.
    """
    opts = opts or SolverOptions()
    theta = opts.damping
    z = np.asarray(z_init, dtype=float).copy()
    if z.shape != (model.K,) or np.any(z < 0):
        raise PreconditionError("z_init must be a nonnegative vector of length K")
    for n in range(1, opts.max_iter + 1):
        f = load_map(model, z)
        step = float(np.max(np.abs(f - z)))
        if step < opts.tol and residual(model, loads(model, z)) <= opts.tol:
            return make_result(model, z, "damped", n, converged=True, aux={"damping": theta})
        z = (1.0 - theta) * z + theta * f
    return make_result(model, z, "damped", opts.max_iter, converged=False,
                       aux={"damping": theta, "step": step},
                       message="damped iteration did not converge")
