"""Distributional checks: standardisation, Kolmogorov distance, TV distance, rate fits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from .asymptotics import constants
from .errors import ContractError
from .model import KDistribution, ScalingParams, sample_k_batch

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class StandardizedSample:
    values: np.ndarray
    n: int
    scaling: ScalingParams


@dataclass(frozen=True, eq=False)
class KsReport:
    n_values: tuple
    ks: tuple
    fitted_slope: float
    replicates: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ContractError("n_values must be strictly increasing")
        if len(self.ks) != len(self.n_values):
            raise ContractError("one KS value per n is required")


def normal_cdf(x):
    """Standard normal CDF via the complementary error function (scalar or array)."""
    out = np.clip(special.ndtr(x), 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def standardize(samples: Sequence[int], scaling: ScalingParams, n: int) -> StandardizedSample:
    c = constants(scaling)
    k = np.asarray(samples, dtype=np.float64)
    values = math.sqrt(n) * (k / n - c.m) / math.sqrt(c.s2)
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ContractError("standardised sample must be non-empty and finite")
    return StandardizedSample(values=values, n=n, scaling=scaling)


def ks_to_normal(sample) -> float:
    """Exact one-sample Kolmogorov statistic of the sample against the standard normal."""
    values = sample.values if isinstance(sample, StandardizedSample) else np.asarray(sample, float)
    m = values.size
    if m == 0:
        raise ContractError("empty sample")
    cdf = normal_cdf(np.sort(values))
    i = np.arange(1, m + 1)
    return float(max(np.max(np.abs(i / m - cdf)), np.max(np.abs((i - 1) / m - cdf))))


def shift_scale_normal_distance(a: float, b: float) -> float:
    """sup_x |Phi((x - a) / b) - Phi(x)|, by a dense grid plus bounded refinement."""
    if not b > 0:
        raise ContractError(f"scale must be positive, got {b}")
    if a == 0.0 and b == 1.0:
        return 0.0

    def gap(x):
        return abs(special.ndtr((x - a) / b) - special.ndtr(x))

    step = 1e-3
    grid = np.arange(-10.0, 10.0 + step / 2, step)
    values = gap(grid)
    best = float(values.max())
    # the difference has at most two local extrema; refine around both grid maxima
    interior = np.flatnonzero((values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])) + 1
    for i in interior[np.argsort(values[interior])[-2:]]:
        res = optimize.minimize_scalar(lambda x: -gap(x), bounds=(grid[i] - step, grid[i] + step),
                                       method="bounded", options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return best


def shift_scale_bound(a: float, b: float) -> float:
    """Mean-value bound |a| / (b sqrt(2 pi)) + |1 - b| / (min(b, 1) sqrt(2 pi e))."""
    return abs(a) / (b * _SQRT_2PI) + abs(1.0 - b) / (min(b, 1.0) * _SQRT_2PI * math.sqrt(math.e))


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 3:
        raise ContractError("a rate fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ContractError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def fit_rate(report: KsReport) -> float:
    """Least-squares slope of log(ks) against log(n)."""
    return fit_loglog_slope(report.n_values, report.ks)


def tv_distance(p: KDistribution, q_empirical: Sequence[int]) -> float:
    q = np.asarray(q_empirical)
    if q.size == 0:
        raise ContractError("empty sample")
    if q.min() < 1 or q.max() > p.n:
        raise ContractError(f"sample values must lie in 1..{p.n}")
    freq = np.bincount(q, minlength=p.n + 1)[1:] / q.size
    return 0.5 * math.fsum(np.abs(p.pmf - freq).tolist())


def clt_experiment(scaling: ScalingParams, n_values: Sequence[int], replicates: int,
                   seed: int, workers: Optional[int] = None) -> KsReport:
    """KS distance of the standardised K_n to the normal for each n, plus the fitted rate."""
    n_values = tuple(int(n) for n in n_values)
    ks = tuple(ks_to_normal(standardize(sample_k_batch(scaling, n, replicates, seed, workers),
                                        scaling, n)) for n in n_values)
    slope = fit_loglog_slope(n_values, ks) if len(n_values) >= 3 else math.nan
    return KsReport(n_values=n_values, ks=ks, fitted_slope=slope, replicates=replicates)
