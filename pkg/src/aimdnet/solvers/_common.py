from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import optimize

from ..equilibrium import loads, residual
from ..model import NetworkModel


class PreconditionError(ValueError):
    """The model does not satisfy the hypotheses a solver relies on."""


class BracketError(RuntimeError):
    """A one-dimensional root could not be bracketed."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 10_000
    damping: float = 0.5
    inner_tol: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.inner_tol <= self.tol:
            raise ValueError("inner_tol must be positive and no larger than tol")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FixedPointResult:
    """Outcome of a fixed-point solve.

    ``u_star`` is always ``A @ z_star``. ``bracket`` holds the lower and upper
    limits of the alternating iteration when the solver produced one.
    """

    z_star: np.ndarray
    u_star: np.ndarray
    residual: float
    iterations: int
    method: str
    converged: bool = True
    unique_certified: bool = False
    bracket: tuple[np.ndarray, np.ndarray] | None = None
    aux: dict = field(default_factory=dict)
    message: str = ""

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "converged": self.converged,
            "unique_certified": self.unique_certified,
            "iterations": self.iterations,
            "residual": self.residual,
            "z_star": self.z_star.tolist(),
            "u_star": self.u_star.tolist(),
            "message": self.message,
        }
        if self.bracket is not None:
            out["bracket"] = [self.bracket[0].tolist(), self.bracket[1].tolist()]
        if self.aux:
            out["aux"] = {k: _plain(v) for k, v in self.aux.items()}
        return out


def _plain(v):
    if hasattr(v, "to_dict"):
        return v.to_dict()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def make_result(model: NetworkModel, z, method: str, iterations: int, **kw) -> FixedPointResult:
    z = np.asarray(z, dtype=float)
    u = loads(model, z)
    try:
        res = residual(model, u)
    except (ValueError, ArithmeticError):
        res = math.inf
    return FixedPointResult(z, u, res, iterations, method, **kw)


_NEG_FLOOR = -1e300


def solve_increasing(g, lo: float = 0.0, tol: float = 1e-12, what: str = "",
                     max_doublings: int = 64) -> float:
    """Root of a continuous non-decreasing ``g`` on ``[lo, inf)``.

    The upper end of the bracket grows geometrically from ``max(1, 2 lo)``;
    the root itself is located by Brent's bracketed method.
    """

    def f(x):
        v = g(x)
        return _NEG_FLOOR if v == -math.inf else v

    f_lo = f(lo)
    if math.isnan(f_lo):
        raise BracketError(f"{what}: equation is undefined at {lo}")
    if f_lo >= 0:
        if f_lo == 0 or f_lo < tol:
            return lo
        raise BracketError(f"{what}: equation is already positive at the lower end {lo}")
    hi = max(1.0, 2.0 * lo)
    for _ in range(max_doublings + 1):
        f_hi = f(hi)
        if f_hi >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(f"{what}: no sign change after {max_doublings} doublings")
    if f_hi == 0:
        return hi
    return optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
