"""Sequential GCRP sampling and exact finite-n laws for the number of tables.

The sampler is driven by caller-visible uniforms: replicate ``r`` of a run
seeded with ``seed`` always consumes the stream ``replicate_rng(seed, r)``, so
batch results do not depend on block sizes or on the number of workers.
"""
from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import BudgetError, ContractError

EXACT_DP_MAX_N = 100_000
ENUMERATION_MAX_N = 10
# uniforms held in memory per sampling block
_BLOCK_ELEMENTS = 1 << 22
_MAX_BLOCK_ROWS = 1024


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.theta)):
            raise ContractError(f"parameters must be finite, got {self}")
        if not 0.0 <= self.alpha < 1.0:
            raise ContractError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.theta + self.alpha > 0.0:
            raise ContractError(f"theta must exceed -alpha, got theta={self.theta}, alpha={self.alpha}")


@dataclass(frozen=True)
class ScalingParams:
    """Linear regime theta = lam * n."""

    alpha: float
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.lam)):
            raise ContractError(f"parameters must be finite, got {self}")
        if not 0.0 <= self.alpha < 1.0:
            raise ContractError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not self.lam > 0.0:
            raise ContractError(f"lambda must be positive, got {self.lam}")

    def theta(self, n: int) -> float:
        return self.lam * n

    def at(self, n: int) -> ModelParams:
        return ModelParams(self.alpha, self.theta(n))


@dataclass(frozen=True)
class TableState:
    """Customers per occupied table, in order of opening."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(self.counts)
        if not counts:
            raise ContractError("a table state needs at least one occupied table")
        for c in counts:
            if int(c) != c or c < 1:
                raise ContractError(f"table counts must be positive integers, got {counts}")
        object.__setattr__(self, "counts", tuple(int(c) for c in counts))

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)


@dataclass(frozen=True, eq=False)
class Trajectory:
    n: int
    params: ModelParams
    k_path: np.ndarray
    tables: Optional[TableState] = None


@dataclass(frozen=True, eq=False)
class KDistribution:
    n: int
    params: ModelParams
    pmf: np.ndarray  # pmf[k - 1] = P(K_n = k)

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, self.n + 1)

    def mean(self) -> float:
        return math.fsum(self.support * self.pmf)

    def variance(self) -> float:
        mu = self.mean()
        return math.fsum((self.support - mu) ** 2 * self.pmf)


def gcrp_step(state: TableState, params: ModelParams, u: float) -> TableState:
    """Seat one more customer using the uniform variate ``u``.

    Outcomes are laid out cumulatively on ``[0, theta + n)``: existing tables
    in index order with widths ``n_i - alpha``, then the new table.
    """
    if not isinstance(state, TableState):
        raise ContractError("state must be a TableState")
    if not 0.0 <= u < 1.0:
        raise ContractError(f"u must lie in [0, 1), got {u}")
    n, k = state.n, state.k
    x = u * (params.theta + n)
    # the existing tables jointly occupy [0, n - alpha*k); the same closed form
    # is used by the vectorised K-only sampler so both agree bit for bit
    if x >= n - params.alpha * k:
        return TableState(state.counts + (1,))
    counts = list(state.counts)
    acc = 0.0
    target = k - 1
    for i, c in enumerate(counts):
        acc += c - params.alpha
        if x < acc:
            target = i
            break
    counts[target] += 1
    return TableState(tuple(counts))


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for replicate ``replicate`` of a run keyed by ``seed``."""
    return np.random.default_rng([int(seed) % 2**64, int(replicate)])


def gcrp_sample(params: ModelParams, n: int, seed: int, replicate: int = 0) -> Trajectory:
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    u = replicate_rng(seed, replicate).random(n - 1)
    state = TableState((1,))
    path = np.empty(n, dtype=np.int64)
    path[0] = 1
    for j in range(1, n):
        state = gcrp_step(state, params, float(u[j - 1]))
        path[j] = state.k
    return Trajectory(n, params, path, state)


def _block_rows(n: int) -> int:
    return max(1, min(_MAX_BLOCK_ROWS, _BLOCK_ELEMENTS // max(n, 1)))


def _k_block(params: ModelParams, n: int, seed: int, start: int, stop: int,
             keep_paths: bool) -> np.ndarray:
    rows = stop - start
    u = np.empty((rows, max(n - 1, 0)))
    for i in range(rows):
        u[i] = replicate_rng(seed, start + i).random(n - 1)
    theta, alpha = params.theta, params.alpha
    if alpha == 0.0:
        js = np.arange(1, n, dtype=np.float64)
        opened = (u * (theta + js)) >= js
        paths = np.ones((rows, n), dtype=np.int64)
        np.cumsum(opened, axis=1, out=paths[:, 1:])
        paths[:, 1:] += 1
        return paths if keep_paths else paths[:, -1].copy()
    k = np.ones(rows, dtype=np.int64)
    paths = np.empty((rows, n), dtype=np.int64) if keep_paths else None
    if keep_paths:
        paths[:, 0] = 1
    for j in range(1, n):
        k += u[:, j - 1] * (theta + j) >= j - alpha * k
        if keep_paths:
            paths[:, j] = k
    return paths if keep_paths else k


def _blocks(replicates: int, n: int) -> list:
    step = _block_rows(n)
    return [(s, min(s + step, replicates)) for s in range(0, replicates, step)]


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        return os.cpu_count() or 1
    if workers < 1:
        raise ContractError(f"workers must be positive, got {workers}")
    return workers


def _check_batch(n: int, replicates: int):
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    if replicates < 1:
        raise ContractError(f"replicates must be at least 1, got {replicates}")


def iter_k_path_blocks(params: ModelParams, n: int, replicates: int, seed: int,
                       workers: Optional[int] = None) -> Iterator[tuple]:
    """Yield ``(first_replicate, paths)`` blocks of full K-paths in replicate order.

    Row ``i`` of a block equals ``gcrp_sample(params, n, seed, first + i).k_path``.
    """
    _check_batch(n, replicates)
    blocks = _blocks(replicates, n)
    workers = _resolve_workers(workers)
    if workers == 1:
        for s, e in blocks:
            yield s, _k_block(params, n, seed, s, e, True)
        return
    window = 2 * workers  # bounds the number of path blocks held in memory
    with ThreadPoolExecutor(workers) as pool:
        for w in range(0, len(blocks), window):
            chunk = blocks[w:w + window]
            futures = [pool.submit(_k_block, params, n, seed, s, e, True) for s, e in chunk]
            for (s, _), fut in zip(chunk, futures):
                yield s, fut.result()


def sample_k_final(params: ModelParams, n: int, replicates: int, seed: int,
                   workers: Optional[int] = None) -> np.ndarray:
    """K_n for replicates ``0..replicates-1`` at fixed (alpha, theta)."""
    _check_batch(n, replicates)
    blocks = _blocks(replicates, n)
    workers = _resolve_workers(workers)
    if workers == 1:
        parts = [_k_block(params, n, seed, s, e, False) for s, e in blocks]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _k_block(params, n, seed, b[0], b[1], False), blocks))
    return np.concatenate(parts)


def sample_k_batch(scaling: ScalingParams, n: int, replicates: int, seed: int,
                   workers: Optional[int] = None) -> np.ndarray:
    """Independent draws of K_n with theta = lam * n."""
    _check_batch(n, replicates)
    return sample_k_final(scaling.at(n), n, replicates, seed, workers)


def exact_k_distribution(params: ModelParams, n: int) -> KDistribution:
    """Law of K_n by forward recursion on the Markov chain of table counts."""
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    if n > EXACT_DP_MAX_N:
        raise BudgetError(f"exact distribution limited to n <= {EXACT_DP_MAX_N}, got {n}")
    theta, alpha = params.theta, params.alpha
    p = np.zeros(n)
    p[0] = 1.0
    for j in range(1, n):
        ks = np.arange(1, j + 1, dtype=np.float64)
        denom = theta + j
        move = p[:j] * ((theta + alpha * ks) / denom)
        p[:j] *= (j - alpha * ks) / denom
        p[1:j + 1] += move
    return KDistribution(n, params, p)


def _log_rising(x: float, m: int, step: float) -> list:
    return [math.log(x + i * step) for i in range(m)]


def _log_partition_terms(params: ModelParams, sizes: Sequence[int]) -> list:
    theta, alpha = params.theta, params.alpha
    k = len(sizes)
    n = sum(sizes)
    terms = [-math.lgamma(k + 1), math.lgamma(n + 1)]
    terms += [-math.lgamma(s + 1) for s in sizes]
    # [theta]_{k,alpha} / [theta]_{n,1} with the common leading factor theta
    # cancelled, which keeps theta in (-alpha, 0] admissible
    terms += _log_rising(theta + alpha, k - 1, alpha)
    terms += [-v for v in _log_rising(theta + 1.0, n - 1, 1.0)]
    for s in sizes:
        terms += _log_rising(1.0 - alpha, s - 1, 1.0)
    return terms


def exact_partition_pmf(params: ModelParams, block_sizes: Sequence[int]) -> float:
    """P(K_n = k, N_n = (n_1, ..., n_k)) for block sizes listed in a fixed order.

    Evaluated as an exactly rounded sum of logarithms, so the value does not
    depend on the order of ``block_sizes``.
    """
    sizes = list(block_sizes)
    if not sizes:
        raise ContractError("block_sizes must be non-empty")
    if any(int(s) != s or s < 1 for s in sizes):
        raise ContractError(f"block sizes must be positive integers, got {sizes}")
    return math.exp(math.fsum(_log_partition_terms(params, [int(s) for s in sizes])))


def set_partitions(n: int) -> Iterator[list]:
    """All set partitions of {0..n-1} as restricted growth strings.

    The same list object is yielded each time; copy it to keep a result.
    """
    if n < 1:
        return
    a = [0] * n

    def rec(i: int, top: int):
        if i == n:
            yield a
            return
        for v in range(top + 2):
            a[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0)


def block_size_counts(n: int) -> Counter:
    """Number of set partitions of {1..n} realising each sorted block-size vector."""
    counter = Counter()
    for rgs in set_partitions(n):
        sizes = Counter(rgs).values()
        counter[tuple(sorted(sizes, reverse=True))] += 1
    return counter


def enumerate_partition_check(params: ModelParams, n: int) -> tuple:
    """Brute-force oracle: total mass of the partition law and its K-marginal.

    Every set partition of {1..n} is visited. Each distinct block-size
    multiset found contributes its probability under the ordered-block law,
    multiplied by its number of distinct orderings.
    """
    if n < 1:
        raise ContractError(f"n must be at least 1, got {n}")
    if n > ENUMERATION_MAX_N:
        raise BudgetError(f"enumeration limited to n <= {ENUMERATION_MAX_N}, got {n}")
    by_k = [[] for _ in range(n)]
    for sizes in block_size_counts(n):
        mult = Counter(sizes).values()
        orderings = math.factorial(len(sizes))
        for m in mult:
            orderings //= math.factorial(m)
        by_k[len(sizes) - 1].append(orderings * exact_partition_pmf(params, sizes))
    pmf = np.array([math.fsum(v) for v in by_k])
    total = math.fsum(pmf)
    return total, KDistribution(n, params, pmf)
