"""Limit constants and the special-function machinery behind them.

Long products of factors close to one (the normalisers phi and psi) are
accumulated as compensated sums of ``log1p`` terms; at theta ~ 1e5 a plain
log-gamma difference loses about six digits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ContractError
from .model import ModelParams, ScalingParams

# j at or below which phi is evaluated as a direct product
PHI_PRODUCT_MAX_J = 64
# below this argument the log-gamma ratio is shifted up by recurrence
_STIRLING_MIN_Z = 10.0
# B_{2k} / (2k (2k - 1)) for k = 1..6
_STIRLING_COEFFS = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360)


@dataclass(frozen=True)
class Constants:
    m: float
    s2: float
    sigma2: Optional[float]  # undefined when alpha == 0
    a: float


@dataclass(frozen=True)
class GammaRatioApprox:
    value: float
    first_order: float
    z: float
    a: float
    b: float


class NormaliserGaps(NamedTuple):
    phi_gap: float
    weighted_sum_gap: float


def compensated_cumsum(terms) -> np.ndarray:
    """Running sums with Neumaier compensation."""
    out = np.empty(len(terms))
    s = 0.0
    c = 0.0
    for i, t in enumerate(np.asarray(terms, dtype=np.float64).tolist()):
        tot = s + t
        if abs(s) >= abs(t):
            c += (s - tot) + t
        else:
            c += (t - tot) + s
        s = tot
        out[i] = s + c
    return out


def constants(scaling: ScalingParams) -> Constants:
    lam, alpha = scaling.lam, scaling.alpha
    ell = math.log1p(1.0 / lam)
    if alpha == 0.0:
        m = lam * ell
        s2 = lam * ell - lam / (1.0 + lam)
        return Constants(m=m, s2=s2, sigma2=None, a=ell)
    grow = math.exp(alpha * ell)  # (1 + 1/lam)^alpha
    em1 = math.expm1(alpha * ell)
    m = lam / alpha * em1
    s2 = lam / alpha * grow * (em1 - grow * alpha / (1.0 + lam))
    sigma2 = alpha / lam * (-math.expm1(-alpha * ell) - alpha / (1.0 + lam))
    a = lam ** -alpha * -math.expm1(-alpha * ell) / alpha
    return Constants(m=m, s2=s2, sigma2=sigma2, a=a)


def log_gamma_ratio(z: float, a: float) -> float:
    """log(Gamma(z + a) / Gamma(z)) without forming either log-gamma value."""
    if not (z > 0.0 and z + a > 0.0):
        raise ContractError(f"need z > 0 and z + a > 0, got z={z}, a={a}")
    if a == 0.0:
        return 0.0
    shift = []
    while z < _STIRLING_MIN_Z or z + a < _STIRLING_MIN_Z:
        shift.append(-math.log1p(a / z))
        z += 1.0
    corr = 0.0
    za, zi = 1.0 / (z + a), 1.0 / z
    za2, zi2 = za * za, zi * zi
    pa, pz = za, zi
    for coef in _STIRLING_COEFFS:
        corr += coef * (pa - pz)
        pa *= za2
        pz *= zi2
    main = [(z - 0.5) * math.log1p(a / z), a * math.log(z + a), -a, corr]
    return math.fsum(main + shift)


def gamma_ratio_exact(z: float, a: float, b: float) -> float:
    """Gamma(z + a) / Gamma(z + b)."""
    return math.exp(log_gamma_ratio(z, a) - log_gamma_ratio(z, b))


def gamma_ratio_expansion(z: float, a: float, b: float) -> GammaRatioApprox:
    """Two-term large-z expansion of Gamma(z + a) / Gamma(z + b)."""
    if not z > 0.0:
        raise ContractError(f"z must be positive, got {z}")
    lead = z ** (a - b)
    value = lead * (1.0 + (a - b) * (a + b - 1.0) / (2.0 * z))
    return GammaRatioApprox(value=value, first_order=lead, z=z, a=a, b=b)


def log_phi(theta: float, alpha: float, j: int) -> float:
    if j < 1:
        raise ContractError(f"j must be at least 1, got {j}")
    if j == 1 or alpha == 0.0:
        return 0.0
    if j <= PHI_PRODUCT_MAX_J:
        return math.log(_phi_product(theta, alpha, j))
    return log_gamma_ratio(theta + j, alpha) - log_gamma_ratio(theta + 1.0, alpha)


def _phi_product(theta: float, alpha: float, j: int) -> float:
    return math.prod(1.0 + alpha / (i + theta) for i in range(1, j))


def phi(theta: float, alpha: float, j: int) -> float:
    """Product of (1 + alpha / (i + theta)) over i = 1..j-1."""
    if j < 1:
        raise ContractError(f"j must be at least 1, got {j}")
    if j == 1 or alpha == 0.0:
        return 1.0
    if j <= PHI_PRODUCT_MAX_J:
        return _phi_product(theta, alpha, j)
    return math.exp(log_phi(theta, alpha, j))


def psi(theta: float, alpha: float, j: int) -> float:
    return (theta + alpha) * phi(theta, alpha, j)


@lru_cache(maxsize=64)
def _log_phi_table(theta: float, alpha: float, n: int) -> np.ndarray:
    out = np.zeros(n)
    if n > 1 and alpha != 0.0:
        out[1:] = compensated_cumsum(np.log1p(alpha / (np.arange(1, n) + theta)))
    out.setflags(write=False)
    return out


def phi_table(theta: float, alpha: float, n: int) -> np.ndarray:
    """phi_{theta,j} for j = 1..n (index j - 1)."""
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    return np.exp(_log_phi_table(float(theta), float(alpha), int(n)))


def psi_table(theta: float, alpha: float, n: int) -> np.ndarray:
    """psi_{theta,j} for j = 1..n (index j - 1)."""
    return (theta + alpha) * phi_table(theta, alpha, n)


def exact_mean_k(params: ModelParams, n: int) -> float:
    """E K_n, from E Z_n = psi_n when alpha > 0 and the Bernoulli sum otherwise."""
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    theta, alpha = params.theta, params.alpha
    if alpha == 0.0:
        js = np.arange(1, n, dtype=np.float64)
        return math.fsum([1.0, *(theta / (theta + js)).tolist()])
    lp = log_phi(theta, alpha, n)
    # (psi_n - theta) / alpha, rearranged to avoid cancelling theta
    return (theta * math.expm1(lp) + alpha * math.exp(lp)) / alpha


def riemann_right_sum(f: Callable[[np.ndarray], np.ndarray], n: int,
                      deriv_bound: float) -> tuple:
    """Right-endpoint Riemann sum of ``f`` on [0, 1] and its error bound.

    ``deriv_bound`` must dominate sup |f'| on [0, 1]; the returned bound is
    ``deriv_bound / n``.
    """
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    if deriv_bound < 0:
        raise ContractError("deriv_bound must be non-negative")
    x = np.arange(1, n + 1, dtype=np.float64) / n
    values = np.asarray(f(x), dtype=np.float64) * np.ones_like(x)
    return math.fsum(values.tolist()) / n, deriv_bound / n


def power_integrand(lam: float, alpha: float, power: Optional[float] = None) -> tuple:
    """``(f, sup|f'|, integral)`` for f(x) = (lam + x)^-p on [0, 1], p = 1 + alpha by default."""
    p = 1.0 + alpha if power is None else power
    if not lam > 0:
        raise ContractError(f"lam must be positive, got {lam}")

    def f(x):
        return (lam + x) ** -p

    deriv = p * lam ** (-p - 1.0)
    if p == 1.0:
        integral = math.log1p(1.0 / lam)
    else:
        integral = (lam ** (1.0 - p) - (1.0 + lam) ** (1.0 - p)) / (p - 1.0)
    return f, deriv, integral


def normaliser_gaps(scaling: ScalingParams, n: int) -> NormaliserGaps:
    """Distances of phi_{lam n, n} and the weighted phi-sum from their limits."""
    if n < 2:
        raise ContractError(f"n must be at least 2, got {n}")
    lam, alpha = scaling.lam, scaling.alpha
    theta = scaling.theta(n)
    ph = phi_table(theta, alpha, n)
    limit = math.exp(alpha * math.log1p(1.0 / lam))
    i = np.arange(1, n + 1, dtype=np.float64)
    weighted = ph[-1] / n * math.fsum((theta / ((theta + i) * ph)).tolist())
    return NormaliserGaps(abs(ph[-1] - limit), abs(weighted - constants(scaling).m))


def finite_sigma2(scaling: ScalingParams, n: int) -> float:
    """Finite-n version of sigma^2: alpha^2 n sum_j [1/((lam n+j+alpha) psi_{j+1}) - 1/(lam n+j+alpha)^2]."""
    alpha = scaling.alpha
    if alpha == 0.0:
        raise ContractError("sigma^2 is defined only for alpha in (0, 1)")
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    theta = scaling.theta(n)
    ps = psi_table(theta, alpha, n + 1)[1:]
    d = theta + np.arange(1, n + 1, dtype=np.float64) + alpha
    first = math.fsum((1.0 / (d * ps)).tolist())
    second = math.fsum((1.0 / (d * d)).tolist())
    return alpha * alpha * n * (first - second)
