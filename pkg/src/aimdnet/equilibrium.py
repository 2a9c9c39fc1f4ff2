"""Stationary law of a single AIMD flow and the network load map.

A flow growing at rate ``a`` whose throughput ``w`` is cut to ``r*w`` at rate
``beta*w`` has a stationary law that depends on ``a`` and ``beta`` only
through ``rho = a/beta``. The stationary mean is ``sqrt(rho) * c(r)`` where
``c`` is :func:`throughput_coefficient`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .model import DomainError, NetworkModel, eval_beta

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# above this ratio between the largest series coefficient and 1 the alternating
# density series loses too many digits in float64 and is summed in mpmath
_CANCELLATION_LIMIT = 1e4


def _check_r(r: float) -> float:
    r = float(r)
    if not 0.0 <= r < 1.0:
        raise DomainError(f"decrease factor r={r} must lie in [0, 1)")
    return r


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0 and math.isfinite(rho)):
        raise DomainError(f"rho={rho} must be positive and finite")
    return rho


@lru_cache(maxsize=1024)
def _coefficient(r: float) -> float:
    log_prod = 0.0
    n = 1
    while True:
        odd = r ** (2 * n - 1)
        even = odd * r
        # factor (1 - r^2n)/(1 - r^(2n-1)) differs from 1 by about r^(2n-1)
        if odd < 1e-15:
            break
        log_prod += math.log1p(-even) - math.log1p(-odd)
        n += 1
    return SQRT_2_OVER_PI * math.exp(log_prod)


def throughput_coefficient(r: float) -> float:
    """``c(r) = sqrt(2/pi) * prod_{n>=1} (1 - r^(2n)) / (1 - r^(2n-1))``.

    The product is accumulated in log space and truncated once a factor is
    within 1e-15 of one.
    """
    return _coefficient(_check_r(r))


def stationary_mean(r: float, rho: float) -> float:
    """Mean stationary throughput, ``sqrt(rho) * c(r)``."""
    return math.sqrt(_check_rho(rho)) * throughput_coefficient(r)


@dataclass(frozen=True)
class _Series:
    coeffs: np.ndarray      # r^-2n / prod_{k<=n} (1 - r^-2k)
    scales: np.ndarray      # r^-2n
    norm: float             # prod_{n>=0} (1 - r^(2n+1))
    max_coeff: float


@lru_cache(maxsize=256)
def _series(r: float) -> _Series:
    coeffs, scales = [1.0], [1.0]
    prod = 1.0
    n = 1
    while True:
        scale = r ** (-2 * n)
        prod *= 1.0 - scale
        c = scale / prod
        if not math.isfinite(c) or abs(c) < 1e-17 * max(abs(x) for x in coeffs):
            break
        coeffs.append(c)
        scales.append(scale)
        n += 1
    norm = 1.0
    n = 0
    while r ** (2 * n + 1) > 1e-17:
        norm *= 1.0 - r ** (2 * n + 1)
        n += 1
    coeffs = np.array(coeffs)
    return _Series(coeffs, np.array(scales), norm, float(np.max(np.abs(coeffs))))


def _density_mp(r: float, rho: float, w: np.ndarray) -> np.ndarray:
    import mpmath as mp

    digits = int(math.log10(_series(r).max_coeff)) + 25
    with mp.workdps(digits):
        r_, rho_ = mp.mpf(r), mp.mpf(rho)
        norm = mp.nprod(lambda n: 1 - r_ ** (2 * n + 1), [0, mp.inf])
        pre = mp.sqrt(2 / (mp.pi * rho_)) / norm
        out = []
        for x in w:
            x2 = mp.mpf(float(x)) ** 2 / (2 * rho_)
            total, prod, n = mp.mpf(0), mp.mpf(1), 0
            while True:
                scale = r_ ** (-2 * n)
                if n:
                    prod *= 1 - scale
                term = scale / prod * mp.exp(-scale * x2)
                total += term
                if n > 5 and abs(term) < mp.mpf(10) ** (-digits):
                    break
                n += 1
            out.append(float(pre * total))
    return np.array(out)


class StationaryLaw:
    """Stationary throughput law of an isolated AIMD flow with ``rho = a/beta``.

    The density is a Gaussian mixture
    ``sqrt(2/(pi*rho)) / prod_{n>=0}(1 - r^(2n+1)) * sum_n b_n exp(-r^-2n w^2 / (2 rho))``
    with alternating weights ``b_n = r^-2n / prod_{k=1..n}(1 - r^-2k)``.
    """

    def __init__(self, r: float, rho: float):
        self.r = _check_r(r)
        self.rho = _check_rho(rho)
        self.clamped = 0

    @property
    def mean(self) -> float:
        return stationary_mean(self.r, self.rho)

    def density(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if np.any(w < 0) or np.any(np.isnan(w)):
            raise DomainError("density is defined for w >= 0")
        r, rho = self.r, self.rho
        if r == 0.0:
            return math.sqrt(2.0 / (math.pi * rho)) * np.exp(-w * w / (2.0 * rho))
        ser = _series(r)
        flat = w.ravel()
        pre = math.sqrt(2.0 / (math.pi * rho)) / ser.norm
        if ser.max_coeff > _CANCELLATION_LIMIT:
            vals = _density_mp(r, rho, flat)
            scale = np.full_like(vals, 1.0)
        else:
            x2 = flat * flat / (2.0 * rho)
            expo = np.exp(-np.multiply.outer(x2, ser.scales))
            vals = pre * (expo @ ser.coeffs)
            # size of the cancelling terms, the yardstick for rounding noise
            scale = pre * (expo @ np.abs(ser.coeffs))
        neg = vals < 0
        if np.any(vals[neg] < -1e-12 * np.maximum(scale[neg], 1.0)):
            raise ArithmeticError("density series cancelled to a negative value")
        self.clamped += int(np.count_nonzero(neg))
        vals[neg] = 0.0
        return vals.reshape(w.shape)

    def cdf(self, w) -> np.ndarray:
        """Distribution function, via the closed-form integral of each Gaussian term."""
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise DomainError("cdf is defined for w >= 0")
        if self.r == 0.0:
            return special.erf(w / math.sqrt(2.0 * self.rho))
        ser = _series(self.r)
        flat = w.ravel()
        arg = np.multiply.outer(flat / math.sqrt(2.0 * self.rho), np.sqrt(ser.scales))
        # each term integrates to b_n r^n erf(.) since the sqrt(scale) factors cancel
        weights = ser.coeffs / np.sqrt(ser.scales)
        vals = (special.erf(arg) @ weights) / ser.norm
        return np.clip(vals, 0.0, 1.0).reshape(w.shape)

    def ppf(self, q) -> np.ndarray:
        """Quantiles by bisection on :meth:`cdf`."""
        shape = np.shape(q)
        q = np.atleast_1d(np.asarray(q, dtype=float))
        lo = np.zeros_like(q)
        hi = np.full_like(q, 10.0 * math.sqrt(self.rho))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return (0.5 * (lo + hi)).reshape(shape)


def stationary_density(r: float, rho: float, w):
    """Stationary density at ``w`` (scalar or array)."""
    out = StationaryLaw(r, rho).density(w)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# network load map

def _phi(model: NetworkModel, k: int, beta: float) -> float:
    c = model.classes[k]
    return c.p * throughput_coefficient(c.r) * math.sqrt(c.a / beta)


def phi_class(model: NetworkModel, k: int, u) -> float:
    """Expected weighted class-``k`` throughput, ``p_k c(r_k) sqrt(a_k / beta_k(u))``."""
    beta = eval_beta(model, k, u)
    if beta <= 0.0:
        raise DomainError(f"class {k}: loss rate is zero at u={list(np.asarray(u))}")
    return _phi(model, k, beta)


def phi_all(model: NetworkModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("node loads must be finite and nonnegative")
    betas = model.betas(u)
    bad = np.flatnonzero(betas <= 0.0)
    if bad.size:
        raise DomainError(f"loss rate is zero for classes {bad.tolist()}")
    return np.array([_phi(model, k, b) for k, b in enumerate(betas)])


def alpha(model: NetworkModel) -> np.ndarray:
    """Per-class constants ``p_k c(r_k) sqrt(a_k)``, so that ``phi_k = alpha_k / sqrt(beta_k)``."""
    return np.array([c.p * throughput_coefficient(c.r) * math.sqrt(c.a) for c in model.classes])


def loads(model: NetworkModel, z) -> np.ndarray:
    """Node loads ``u = A z``."""
    return model.A @ np.asarray(z, dtype=float)


def load_map(model: NetworkModel, z) -> np.ndarray:
    """``Phi(z) = (phi_k(A z))_k``; antitone when every loss rate is non-decreasing."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise DomainError("class rates must be nonnegative")
    return phi_all(model, loads(model, z))


def residual(model: NetworkModel, u) -> float:
    """``max_j |u_j - sum_k A_jk phi_k(u)|``; zero exactly at equilibria."""
    u = np.asarray(u, dtype=float)
    return float(np.max(np.abs(u - model.A @ phi_all(model, u))))
