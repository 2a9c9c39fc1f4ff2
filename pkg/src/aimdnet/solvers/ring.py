"""Ring topologies.

Variables ``y_j`` are the class rates of the two-node classes; class ``j``
uses nodes ``j`` and ``j+1 (mod J)``, so ``u_j = y_{j-1} + y_j`` plus the
single-node and complete-route contributions when those classes exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..equilibrium import alpha, loads, residual
from ..model import NetworkModel, check_model
from ._common import (BracketError, FixedPointResult, PreconditionError, SolverOptions,
                      make_result, solve_increasing)
from .generic import bracket_iterate


@dataclass
class RingAuxiliary:
    y: np.ndarray
    y0: float | None = None
    y0j: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {"y": self.y.tolist()}
        if self.y0 is not None:
            out["y0"] = self.y0
        if self.y0j is not None:
            out["y0j"] = self.y0j.tolist()
        return out


def _require(model: NetworkModel, tag: str):
    if model.topology != tag:
        raise PreconditionError(f"expected a {tag!r} model, got {model.topology!r}")
    check_model(model)


def _sum_terms(model: NetworkModel, classes) -> list:
    terms = []
    for k in classes:
        t = model.loss[k].as_route_sum()
        if t is None:
            raise PreconditionError(f"class {k}: loss rate is not a function of the route load sum")
        terms.append((model.loss[k].delta, t))
    return terms


def _phi_sum(alpha_k: float, spec, s: float) -> float:
    delta, term = spec
    beta = delta + term(s)
    return math.inf if beta <= 0 else alpha_k / math.sqrt(beta)


def _contract(T, y0, model, opts, make_z, method, aux_of):
    y = np.asarray(y0, dtype=float)
    theta = opts.damping
    for n in range(1, opts.max_iter + 1):
        y_new = T(y)
        step = float(np.max(np.abs(y_new - y)))
        y_next = (1.0 - theta) * y + theta * y_new if theta < 1.0 else y_new
        if step < opts.tol:
            z = make_z(y_new)
            if residual(model, loads(model, z)) <= opts.tol:
                return make_result(model, z, method, n, converged=True, unique_certified=True,
                                   aux={"ring": aux_of(y_new), "last_step": step})
        y = y_next
    return make_result(model, make_z(y), method, opts.max_iter, converged=False,
                       aux={"ring": aux_of(y), "previous": y.tolist(), "last": T(y).tolist()},
                       message="outer ring iteration did not converge")


def ring_two_inner(model: NetworkModel, tol: float = 1e-12):
    """``x(j, y_prev, y_next)``: the rate of class ``j`` solving
    ``x = phi_j(y_prev + x, x + y_next)`` with neighbour rates held fixed."""
    J = model.J
    alphas = alpha(model)

    def x(j, y_prev, y_next):
        spec = model.loss[j]
        a_j = alphas[j]
        first, second = j, (j + 1) % J

        def eq(v):
            u = [0.0] * J
            u[first] += y_prev + v
            if second != first:
                u[second] = v + y_next
            beta = spec(u)
            return v - (math.inf if beta <= 0 else a_j / math.sqrt(beta))

        return solve_increasing(eq, 0.0, tol, what=f"ring class {j}")

    return x


def solve_ring_two(model: NetworkModel, opts: SolverOptions | None = None,
                   damping: float | None = None) -> FixedPointResult:
    """Contraction iteration ``y <- T(y)`` with ``T_j(y) = x_j(y_{j-1}, y_{j+1})``.

    Plain (undamped) by default; pass ``damping`` to relax the outer step.
    """
    opts = opts or SolverOptions()
    _require(model, "ring2")
    J = model.J
    x = ring_two_inner(model, opts.inner_tol)
    run_opts = SolverOptions(opts.tol, opts.max_iter, damping or 1.0, opts.inner_tol)

    def T(y):
        return np.array([x(j, y[j - 1], y[(j + 1) % J]) for j in range(J)])

    return _contract(T, np.zeros(J), model, run_opts, lambda y: y, "ring2",
                     lambda y: RingAuxiliary(y.copy()))


def solve_ring_mixed(model: NetworkModel, opts: SolverOptions | None = None,
                     damping: float | None = None) -> FixedPointResult:
    """Two-node classes ``0..J-1`` plus single-node classes ``J..2J-1``.

    ``x0_j(t)`` solves ``x = phi_0j(x + t)``; the outer map solves, for each
    ``j``, ``y = phi_j(y_{j-1} + 2y + y_{j+1} + x0_j(y_{j-1} + y) + x0_{j+1}(y + y_{j+1}))``.
    """
    opts = opts or SolverOptions()
    _require(model, "ring2+1")
    J = model.J
    alphas = alpha(model)
    two = _sum_terms(model, range(J))
    one = _sum_terms(model, range(J, 2 * J))
    tol = opts.inner_tol
    run_opts = SolverOptions(opts.tol, opts.max_iter, damping or 1.0, opts.inner_tol)

    def x0(j, t):
        a_j, spec = alphas[J + j], one[j]
        return solve_increasing(lambda v: v - _phi_sum(a_j, spec, v + t), 0.0, tol,
                                what=f"single-node class at node {j}")

    def x(j, y_prev, y_next):
        a_j, spec, nxt = alphas[j], two[j], (j + 1) % J

        def eq(v):
            s = y_prev + 2.0 * v + y_next + x0(j, y_prev + v) + x0(nxt, v + y_next)
            return v - _phi_sum(a_j, spec, s)

        return solve_increasing(eq, 0.0, tol, what=f"ring class {j}")

    def T(y):
        return np.array([x(j, y[j - 1], y[(j + 1) % J]) for j in range(J)])

    def y0j(y):
        return np.array([x0(j, y[j - 1] + y[j]) for j in range(J)])

    return _contract(T, np.zeros(J), model, run_opts,
                     lambda y: np.concatenate([y, y0j(y)]), "ring2+1",
                     lambda y: RingAuxiliary(y.copy(), y0j=y0j(y)))


def solve_ring_full(model: NetworkModel, opts: SolverOptions | None = None,
                    record: bool = False) -> FixedPointResult:
    """Complete-route class 0 plus two-node classes ``1..J``.

    Alternating iteration on ``(y_0, y_1..y_J)`` with
    ``y_j = phi_j(y_{j-1} + 2 y_j + y_{j+1} + 2 y_0)`` and
    ``y_0 = phi_0(J y_0 + 2 sum_j y_j)``.
    """
    opts = opts or SolverOptions()
    _require(model, "ring2+full")
    J = model.J
    alphas = alpha(model)
    specs = _sum_terms(model, range(J + 1))
    if any(d <= 0 for d, _ in specs):
        raise PreconditionError("the alternating iteration needs positive base loss rates")

    def psi(z):
        y0, y = z[0], z[1:]
        s = np.roll(y, 1) + 2.0 * y + np.roll(y, -1) + 2.0 * y0
        out = np.empty(J + 1)
        out[0] = _phi_sum(alphas[0], specs[0], J * y0 + 2.0 * y.sum())
        for i in range(J):
            out[i + 1] = _phi_sum(alphas[i + 1], specs[i + 1], s[i])
        return out

    def done(z):
        return residual(model, loads(model, z)) <= opts.tol

    res = bracket_iterate(psi, np.zeros(J + 1), opts, done, "ring2+full", model, record)
    res.aux["ring"] = RingAuxiliary(res.z_star[1:].copy(), y0=float(res.z_star[0]))
    return res


def estimate_contraction(model: NetworkModel, grid=(0.0, 5.0, 8),
                         opts: SolverOptions | None = None, return_grid: bool = False):
    """Largest ``|dx_j/dy_{j-1}| + |dx_j/dy_{j+1}|`` over a grid of neighbour rates.

    ``grid`` is ``(low, high, n)``: ``n`` equally spaced values per axis.
    Partials are central differences with step ``1e-5 * max(1, |y|)``
    (one-sided second order at the lower boundary).
    """
    opts = opts or SolverOptions()
    _require(model, "ring2")
    lo, hi, n = grid
    values = np.linspace(lo, hi, int(n))
    J = model.J
    x = ring_two_inner(model, min(opts.inner_tol, 1e-14))
    sums = np.zeros((J, len(values), len(values)))

    def deriv(f, y):
        h = 1e-5 * max(1.0, abs(y))
        if y - h >= 0:
            return (f(y + h) - f(y - h)) / (2 * h)
        return (-3 * f(y) + 4 * f(y + h) - f(y + 2 * h)) / (2 * h)

    for j in range(J):
        for a, yp in enumerate(values):
            for b, yn in enumerate(values):
                try:
                    d1 = deriv(lambda t: x(j, t, yn), yp)
                    d2 = deriv(lambda t: x(j, yp, t), yn)
                except BracketError as exc:
                    raise BracketError(f"grid point ({yp}, {yn}), class {j}: {exc}") from exc
                sums[j, a, b] = abs(d1) + abs(d2)
    est = float(sums.max())
    return (est, sums) if return_grid else est
