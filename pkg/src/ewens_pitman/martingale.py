"""The normalised table-count martingale Y_{n,j} = (theta + alpha K_j) / psi_{theta,j}.

With theta = lam * n the process j -> Y_{n,j} is a mean-one martingale. This
module builds its paths, the closed-form conditional variance V_n^2, the
Hall-Heyde rate functional L_n, and, for alpha == 0 where the martingale is
constant, the exact Lyapunov ratio of the independent Bernoulli representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .asymptotics import constants, psi_table
from .errors import ContractError, UnsupportedRegimeError
from .model import (ScalingParams, Trajectory, iter_k_path_blocks, replicate_rng)

# negative V^2 summands of at most this size are treated as rounding noise
ROUNDING_FLOOR = 1e-15


@dataclass(frozen=True, eq=False)
class MartingalePath:
    n: int
    scaling: ScalingParams
    y: np.ndarray           # Y_{n,j}, j = 1..n
    increments: np.ndarray  # Y_{n,j+1} - Y_{n,j}, j = 1..n-1
    bound: np.ndarray       # 2 / psi_{lam n, j+1}, j = 1..n-1


@dataclass(frozen=True, eq=False)
class VarianceReport:
    v2: float = math.nan
    summands: np.ndarray = field(default_factory=lambda: np.empty(0))
    ln_hall_heyde: float = math.nan
    delta: float = 1.0
    lyapunov: float = math.nan
    sigma_n2: float = math.nan
    degenerate: bool = False


@dataclass(frozen=True)
class HallHeyde:
    ln: float
    increment_term: float  # mean over paths of sum_j |X_{n,j}|^(2+2 delta)
    variance_term: float   # mean over paths of |V_n^2 - 1|^(1+delta)
    delta: float
    paths: int


@dataclass(frozen=True)
class MomentCheck:
    mean_err: float
    var_err: float
    mean_se: float
    var_se: float
    p: float

    def passed(self, n_se: float = 4.0) -> bool:
        return self.mean_err <= n_se * self.mean_se and self.var_err <= n_se * self.var_se


@dataclass(frozen=True)
class AzumaBound:
    increment_sq_sum: float  # sum_j (2 / psi_{j+1})^2, dominates sum_j |dY_j|^2
    c_hat: float             # constant in 2n exp(-c_hat eps^2 n)
    single_time: float       # bound for one fixed j
    union: float             # bound for some j <= n, capped at 1


@dataclass(frozen=True)
class MartingaleSummary:
    scaling: ScalingParams
    n: int
    replicates: int
    mean_y_end: float
    se_y_end: float
    increment_violations: int
    fourth_power_violations: int
    fourth_power_bound: float
    v2_mean: float
    v2_var: float
    v2_max: float
    hall_heyde: HallHeyde
    max_deviation: np.ndarray = field(repr=False)


def _require_positive_alpha(scaling: ScalingParams):
    if scaling.alpha == 0.0:
        raise UnsupportedRegimeError(
            "alpha == 0 makes Y identically 1; use petrov_diagnostics instead")


def _psi(scaling: ScalingParams, n: int) -> np.ndarray:
    # psi_1 .. psi_{n+1}; the last entry enters V_n^2 through j = n
    return psi_table(scaling.theta(n), scaling.alpha, n + 1)


def _y_matrix(k_paths: np.ndarray, scaling: ScalingParams, n: int) -> np.ndarray:
    ps = _psi(scaling, n)[:n]
    return (scaling.theta(n) + scaling.alpha * k_paths) / ps


def y_path(traj: Trajectory, scaling: ScalingParams) -> MartingalePath:
    _require_positive_alpha(scaling)
    n = traj.n
    if traj.params.alpha != scaling.alpha or not math.isclose(
            traj.params.theta, scaling.theta(n), rel_tol=1e-12):
        raise ContractError("trajectory was not sampled with theta = lam * n for this scaling")
    ps = _psi(scaling, n)
    y = _y_matrix(np.asarray(traj.k_path), scaling, n)
    return MartingalePath(n=n, scaling=scaling, y=y, increments=np.diff(y),
                          bound=2.0 / ps[1:n])


def _v2_summands(y: np.ndarray, scaling: ScalingParams, n: int) -> np.ndarray:
    alpha = scaling.alpha
    sigma2 = constants(scaling).sigma2
    ps_next = _psi(scaling, n)[1:]
    d = scaling.theta(n) + np.arange(1, n + 1, dtype=np.float64) + alpha
    terms = alpha * alpha * n / sigma2 * (y / (d * ps_next) - y * y / (d * d))
    noise = (terms < 0) & (terms >= -ROUNDING_FLOOR)
    return np.where(noise, 0.0, terms)


def conditional_variance(path: MartingalePath) -> VarianceReport:
    """V_n^2 from the closed form in Y_{n,j} and psi (no nested simulation)."""
    _require_positive_alpha(path.scaling)
    summands = _v2_summands(path.y, path.scaling, path.n)
    return VarianceReport(v2=math.fsum(summands.tolist()), summands=summands)


def _x_power_sums(y: np.ndarray, scaling: ScalingParams, n: int, delta: float) -> np.ndarray:
    sigma = math.sqrt(constants(scaling).sigma2)
    x = math.sqrt(n) / sigma * np.diff(y, axis=-1)
    return np.sum(np.abs(x) ** (2.0 + 2.0 * delta), axis=-1)


def _check_delta(delta: float):
    if not 0.0 < delta <= 1.0:
        raise ContractError(f"delta must lie in (0, 1], got {delta}")


def hall_heyde_ln(paths: Iterable[MartingalePath], delta: float = 1.0) -> HallHeyde:
    """Monte Carlo estimate of L_n = sum_j E|X_{n,j}|^(2+2d) + E|V_n^2 - 1|^(1+d)."""
    _check_delta(delta)
    inc, var = [], []
    for p in paths:
        inc.append(float(_x_power_sums(p.y, p.scaling, p.n, delta)))
        v2 = conditional_variance(p).v2
        var.append(abs(v2 - 1.0) ** (1.0 + delta))
    if not inc:
        raise ContractError("hall_heyde_ln needs at least one path")
    a, b = math.fsum(inc) / len(inc), math.fsum(var) / len(var)
    return HallHeyde(ln=a + b, increment_term=a, variance_term=b, delta=delta, paths=len(inc))


def fourth_power_bound(scaling: ScalingParams, n: int, delta: float = 1.0) -> float:
    """Deterministic bound on sum_j |X_{n,j}|^(2+2 delta) from |dY_j| <= 2/psi_{j+1}."""
    _require_positive_alpha(scaling)
    sigma2 = constants(scaling).sigma2
    ps = _psi(scaling, n)[1:n]
    return (n / sigma2) ** (1.0 + delta) * math.fsum(((2.0 / ps) ** (2.0 + 2.0 * delta)).tolist())


def simulate_martingale(scaling: ScalingParams, n: int, replicates: int, seed: int,
                        delta: float = 1.0, workers: Optional[int] = None) -> MartingaleSummary:
    """One streaming pass over ``replicates`` paths collecting every pathwise diagnostic.

    Replicate ``r`` is the path of ``gcrp_sample(scaling.at(n), n, seed, r)``.
    """
    _require_positive_alpha(scaling)
    _check_delta(delta)
    ps = _psi(scaling, n)
    bound = 2.0 / ps[1:n]
    b4 = fourth_power_bound(scaling, n, delta)
    y_end, v2, xpow, maxdev = [], [], [], []
    inc_viol = 0
    for _, k_paths in iter_k_path_blocks(scaling.at(n), n, replicates, seed, workers):
        y = _y_matrix(k_paths, scaling, n)
        inc_viol += int(np.count_nonzero(np.abs(np.diff(y, axis=1)) > bound))
        y_end.append(y[:, -1])
        maxdev.append(np.max(np.abs(y - 1.0), axis=1))
        v2.append(np.array([math.fsum(row) for row in _v2_summands(y, scaling, n).tolist()]))
        xpow.append(_x_power_sums(y, scaling, n, delta))
    y_end, v2, xpow, maxdev = (np.concatenate(v) for v in (y_end, v2, xpow, maxdev))
    mean_y = math.fsum(y_end.tolist()) / replicates
    se_y = float(np.std(y_end, ddof=1) / math.sqrt(replicates)) if replicates > 1 else math.nan
    v2_mean = math.fsum(v2.tolist()) / replicates
    inc_term = math.fsum(xpow.tolist()) / replicates
    var_term = math.fsum((np.abs(v2 - 1.0) ** (1.0 + delta)).tolist()) / replicates
    hh = HallHeyde(ln=inc_term + var_term, increment_term=inc_term, variance_term=var_term,
                   delta=delta, paths=replicates)
    return MartingaleSummary(
        scaling=scaling, n=n, replicates=replicates, mean_y_end=mean_y, se_y_end=se_y,
        increment_violations=inc_viol,
        fourth_power_violations=int(np.count_nonzero(xpow > b4)),
        fourth_power_bound=b4,
        v2_mean=v2_mean,
        v2_var=math.fsum(((v2 - v2_mean) ** 2).tolist()) / max(replicates - 1, 1),
        v2_max=float(v2.max()), hall_heyde=hh, max_deviation=maxdev)


def one_step_moment_check(state_k: int, j: int, scaling: ScalingParams, n: int,
                          m_samples: int, seed: int) -> MomentCheck:
    """Empirical mean and variance of one martingale increment from K_j = state_k."""
    _require_positive_alpha(scaling)
    if not 1 <= state_k <= j <= n:
        raise ContractError(f"need 1 <= state_k <= j <= n, got state_k={state_k}, j={j}, n={n}")
    if m_samples < 2:
        raise ContractError("m_samples must be at least 2")
    alpha, theta = scaling.alpha, scaling.theta(n)
    ps = psi_table(theta, alpha, j + 1)
    psi_j, psi_next = float(ps[j - 1]), float(ps[j])
    z = theta + alpha * state_k
    p = z / (theta + j)
    if not 0.0 < p < 1.0:
        raise ContractError(f"new-table probability {p} is not in (0, 1)")
    u = replicate_rng(seed, 0).random(m_samples)
    opened = u * (theta + j) >= j - alpha * state_k
    dy = (z + alpha * opened) / psi_next - z / psi_j
    mean = math.fsum(dy.tolist()) / m_samples
    var = math.fsum(((dy - mean) ** 2).tolist()) / m_samples
    scale = alpha / psi_next
    target = scale * scale * p * (1.0 - p)
    mean_se = scale * math.sqrt(p * (1.0 - p) / m_samples)
    # sd of the sample variance of a Bernoulli; the 1/m term covers p near 1/2
    var_se = scale * scale * (math.sqrt(p * (1.0 - p)) * abs(1.0 - 2.0 * p)
                              / math.sqrt(m_samples) + 1.0 / m_samples)
    return MomentCheck(mean_err=abs(mean), var_err=abs(var - target),
                       mean_se=mean_se, var_se=var_se, p=p)


def azuma_bound(scaling: ScalingParams, n: int, eps: float) -> AzumaBound:
    """Azuma bounds for max_j |Y_{n,j} - 1| built from the implemented increment bound."""
    _require_positive_alpha(scaling)
    ps = _psi(scaling, n)[1:n]
    c = math.fsum(((2.0 / ps) ** 2).tolist())
    if c == 0.0:
        return AzumaBound(0.0, math.inf, 0.0, 0.0)
    single = min(1.0, 2.0 * math.exp(-eps * eps / (2.0 * c)))
    return AzumaBound(increment_sq_sum=c, c_hat=1.0 / (2.0 * n * c), single_time=single,
                      union=min(1.0, 2.0 * n * math.exp(-eps * eps / (2.0 * c))))


def max_deviations(scaling: ScalingParams, n: int, replicates: int, seed: int,
                   workers: Optional[int] = None) -> np.ndarray:
    """max_j |Y_{n,j} - 1| for each replicate."""
    _require_positive_alpha(scaling)
    out = []
    for _, k_paths in iter_k_path_blocks(scaling.at(n), n, replicates, seed, workers):
        out.append(np.max(np.abs(_y_matrix(k_paths, scaling, n) - 1.0), axis=1))
    return np.concatenate(out)


def azuma_concentration_check(scaling: ScalingParams, n: int, eps: float, replicates: int,
                              seed: int, workers: Optional[int] = None) -> float:
    """Fraction of replicates with |Y_{n,j} - 1| > eps for some j <= n."""
    dev = max_deviations(scaling, n, replicates, seed, workers)
    return float(np.count_nonzero(dev > eps)) / replicates


def petrov_diagnostics(lam: float, n: int) -> VarianceReport:
    """Exact variance and Lyapunov ratio of K_n - 1 = sum_j Ber(lam n / (lam n + j)), alpha = 0."""
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    theta = lam * n
    p = theta / (theta + np.arange(1, n, dtype=np.float64))
    var = p * (1.0 - p)
    sigma_n2 = math.fsum(var.tolist())
    if sigma_n2 == 0.0:
        return VarianceReport(summands=var, sigma_n2=0.0, degenerate=True)
    third = math.fsum((var * (p * p + (1.0 - p) ** 2)).tolist())
    return VarianceReport(summands=var, sigma_n2=sigma_n2, lyapunov=third * sigma_n2 ** -1.5)
