"""Permutation policies for the epoch loop, plus the exhaustive oracle for
the sampling-without-replacement mean/variance identity.

Four policies: random reshuffling draws a fresh uniform permutation each
epoch, shuffle-once draws one and reuses it, incremental always walks the
identity order, and fixed replays a user-supplied order.  Permutation
streams are keyed by (seed, epoch) so epochs are independent and runs
restartable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from . import rng

RANDOM_RESHUFFLE = "rr"
SHUFFLE_ONCE = "so"
INCREMENTAL = "ig"
FIXED = "fixed"

EXHAUSTIVE_SUBSET_LIMIT = 1_000_000


def check_permutation(order: np.ndarray, n: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError(f"not a permutation of range({n}): {order!r}")
    return order


@dataclass
class ShuffleStrategy:
    """Per-run permutation factory; one instance per run (the shuffle-once
    cache is mutable and not safe for concurrent sharing)."""

    kind: str
    seed: int = 0
    fixed_order: np.ndarray | None = None
    _cached_once: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in (RANDOM_RESHUFFLE, SHUFFLE_ONCE, INCREMENTAL, FIXED):
            raise ValueError(f"unknown shuffle strategy {self.kind!r}")
        if self.kind == FIXED:
            if self.fixed_order is None:
                raise ValueError("fixed strategy needs an order")
            self.fixed_order = np.asarray(self.fixed_order, dtype=np.int64)

    @property
    def deterministic(self) -> bool:
        return self.kind in (INCREMENTAL, FIXED)

    def fresh(self) -> "ShuffleStrategy":
        return ShuffleStrategy(self.kind, self.seed, self.fixed_order)


def next_permutation(strategy: ShuffleStrategy, epoch: int, n: int) -> np.ndarray:
    """Permutation of range(n) for the given 1-based epoch."""
    if n < 1:
        raise ValueError("n must be positive")
    if epoch < 1:
        raise ValueError("epoch must be >= 1")
    if strategy.kind == INCREMENTAL:
        return np.arange(n, dtype=np.int64)
    if strategy.kind == FIXED:
        return check_permutation(strategy.fixed_order, n)
    if strategy.kind == SHUFFLE_ONCE:
        if strategy._cached_once is None:
            g = rng.stream(strategy.seed, rng.DOMAIN_PERMUTATION, counter=1)
            strategy._cached_once = g.permutation(n).astype(np.int64)
        if len(strategy._cached_once) != n:
            raise ValueError("shuffle-once cache built for a different n")
        return strategy._cached_once
    g = rng.stream(strategy.seed, rng.DOMAIN_PERMUTATION, counter=epoch)
    return g.permutation(n).astype(np.int64)


def _subset_iter(n: int, k: int, num_samples: int, seed: int):
    count = math.comb(n, k)
    if count <= EXHAUSTIVE_SUBSET_LIMIT:
        return combinations(range(n), k), count, True
    g = rng.stream(seed, rng.DOMAIN_PERMUTATION, counter=2)
    draws = (tuple(g.choice(n, size=k, replace=False)) for _ in range(num_samples))
    return draws, num_samples, False


def subset_average_stats(values, k: int, num_samples: int = 200_000, seed: int = 0):
    """Mean and variance of the average of k values sampled without
    replacement.

    Enumerates all k-subsets when their count is at most 10^6, otherwise
    falls back to Monte Carlo.  Returns (mean vector, variance of the subset
    average, info dict with mode and sample count).
    """
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    if vals.shape[0] == 1 and np.asarray(values).ndim == 1:
        vals = np.asarray(values, dtype=float)[:, None]
    n = vals.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    subsets, count, exhaustive = _subset_iter(n, k, num_samples, seed)
    mean_acc = np.zeros(vals.shape[1])
    sq_acc = 0.0
    averages = []
    for subset in subsets:
        avg = vals[list(subset)].mean(axis=0)
        averages.append(avg)
    averages = np.stack(averages)
    mean_acc = averages.mean(axis=0)
    centered = averages - mean_acc
    sq_acc = float(np.mean(np.sum(centered * centered, axis=1)))
    info = {"mode": "exhaustive" if exhaustive else "monte_carlo", "count": count}
    return mean_acc, sq_acc, info


def without_replacement_variance(values, k: int) -> float:
    """Closed form (n - k) / (k (n - 1)) * population variance."""
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    if np.asarray(values).ndim == 1:
        vals = np.asarray(values, dtype=float)[:, None]
    n = vals.shape[0]
    if n < 2:
        raise ValueError("need n >= 2 for the variance identity")
    centered = vals - vals.mean(axis=0)
    sigma_sq = float(np.mean(np.sum(centered * centered, axis=1)))
    return (n - k) / (k * (n - 1)) * sigma_sq


def verify_rr_identity(values, k: int, num_samples: int = 200_000, seed: int = 0):
    """Compare the enumerated variance of without-replacement subset
    averages with its closed form; returns a report dict."""
    mean, lhs, info = subset_average_stats(values, k, num_samples, seed)
    rhs = without_replacement_variance(values, k)
    return {
        "k": k,
        "mean": mean,
        "lhs": lhs,
        "rhs": rhs,
        "abs_gap": abs(lhs - rhs),
        **info,
    }


def all_permutations(n: int):
    """All n! orders as int64 arrays (exhaustive expectation oracles)."""
    return [np.array(p, dtype=np.int64) for p in permutations(range(n))]
