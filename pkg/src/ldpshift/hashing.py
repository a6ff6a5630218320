"""Seeded hash family used by the local-hashing randomizers.

The family is a 64-bit avalanche mix (splitmix64 finalizer) of
``seed + x * GOLDEN``, reduced modulo the hash range.  The contracts that
matter are determinism and near-uniformity over random seeds; both are
covered by tests.  Hot loops (support counting, public-vector expansion,
seed-pool scoring) have numba kernels with numpy fallbacks that compute
bit-identical results.
"""

from __future__ import annotations

import os

import numpy as np

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_USE_NUMBA = os.environ.get("LDPSHIFT_NO_NUMBA", "") == ""
if _USE_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        _USE_NUMBA = False

if not _USE_NUMBA:  # pragma: no cover
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

    prange = range


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, vectorized over uint64 arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):  # uint64 arithmetic is modular by design
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def hash_u64(seed, x) -> np.ndarray:
    """Raw 64-bit hash of (seed, x); broadcasts over either argument."""
    s = np.asarray(seed, dtype=np.uint64)
    xv = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(s + xv * _GOLD)


def hash_map(seed, x, g: int):
    """Hash a bin index into [1..g] under the given seed.

    Deterministic in (seed, x); for random seeds each output is hit with
    probability about 1/g.
    """
    if g < 2:
        raise ValueError(f"hash range must be at least 2, got g={g}")
    out = (hash_u64(seed, x) % np.uint64(g)).astype(np.int64) + 1
    if np.isscalar(seed) and np.isscalar(x):
        return int(out)
    return out


def hst_vector(seed, m: int) -> np.ndarray:
    """Expand a seed into a uniform +-1 public vector of length m.

    Coordinate i is +1 iff the hash of (seed, i) is odd.  Accepts a scalar
    seed (returns shape (m,)) or a seed vector (returns shape (n, m)).
    """
    if m < 2:
        raise ValueError(f"need m >= 2, got {m}")
    idx = np.arange(1, m + 1, dtype=np.uint64)
    s = np.asarray(seed, dtype=np.uint64)
    if s.ndim == 0:
        h = hash_u64(s, idx)
    else:
        h = hash_u64(s[:, None], idx[None, :])
    return np.where(h & np.uint64(1), 1, -1).astype(np.int8)


# ---------------------------------------------------------------------------
# hot kernels


@njit(cache=True, parallel=True)
def _support_counts_nb(seeds, values, m, g):  # pragma: no cover - numba
    n = seeds.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    for i in prange(m):
        c = 0
        xi = np.uint64(i + 1)
        for j in range(n):
            z = seeds[j] + xi * _GOLD
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            if np.int64(z % np.uint64(g)) + 1 == values[j]:
                c += 1
        counts[i] = c
    return counts


def _support_counts_np(seeds, values, m, g):
    counts = np.empty(m, dtype=np.int64)
    vals = values.astype(np.int64)
    for i in range(m):
        h = (hash_u64(seeds, np.uint64(i + 1)) % np.uint64(g)).astype(np.int64) + 1
        counts[i] = int(np.count_nonzero(h == vals))
    return counts


def support_counts(seeds: np.ndarray, values: np.ndarray, m: int, g: int) -> np.ndarray:
    """counts[i-1] = #{j : hash_map(seed_j, i, g) == value_j} for i in 1..m."""
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    values = np.ascontiguousarray(values, dtype=np.int64)
    if _USE_NUMBA:
        return _support_counts_nb(seeds, values, m, g)
    return _support_counts_np(seeds, values, m, g)


@njit(cache=True, parallel=True)
def _hst_stats_nb(seeds, signs, m):  # pragma: no cover - numba
    n = seeds.shape[0]
    signed_sum = np.zeros(m, dtype=np.int64)
    positive = np.zeros(m, dtype=np.int64)
    for i in prange(m):
        ssum = 0
        pos = 0
        xi = np.uint64(i + 1)
        for j in range(n):
            z = seeds[j] + xi * _GOLD
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            s = 1 if z & np.uint64(1) else -1
            prod = s * signs[j]
            ssum += prod
            if prod > 0:
                pos += 1
        signed_sum[i] = ssum
        positive[i] = pos
    return signed_sum, positive


def _hst_stats_np(seeds, signs, m):
    vectors = hst_vector(seeds, m).astype(np.int64)
    prod = vectors * signs[:, None].astype(np.int64)
    return prod.sum(axis=0), (prod > 0).sum(axis=0)


def hst_seed_stats(seeds: np.ndarray, signs: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin sum of sign*vector[i] and count of positive products.

    Used for aggregation and report summaries when public vectors are
    stored as seeds rather than materialized.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    signs = np.ascontiguousarray(signs, dtype=np.int64)
    if _USE_NUMBA:
        return _hst_stats_nb(seeds, signs, m)
    return _hst_stats_np(seeds, signs, m)


@njit(cache=True, parallel=True)
def _best_pool_seed_nb(pool, m, g):  # pragma: no cover - numba
    n_users = pool.shape[0]
    n_seeds = pool.shape[1]
    chosen = np.empty(n_users, dtype=np.uint64)
    target = np.uint64(m)
    for u in prange(n_users):
        best_mean = -1.0
        best_seed = np.uint64(0)
        have = False
        for k in range(n_seeds):
            seed = pool[u, k]
            z = seed + target * _GOLD
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            y = z % np.uint64(g)
            total = 0
            cnt = 0
            for i in range(1, m + 1):
                z = seed + np.uint64(i) * _GOLD
                z = (z ^ (z >> np.uint64(30))) * _MIX1
                z = (z ^ (z >> np.uint64(27))) * _MIX2
                z = z ^ (z >> np.uint64(31))
                if z % np.uint64(g) == y:
                    total += i
                    cnt += 1
            mean = total / cnt
            if (not have) or mean > best_mean or (mean == best_mean and seed < best_seed):
                best_mean = mean
                best_seed = seed
                have = True
        chosen[u] = best_seed
    return chosen


def _best_pool_seed_np(pool, m, g):
    n_users, n_seeds = pool.shape
    flat = pool.reshape(-1)
    ys = hash_u64(flat, np.uint64(m)) % np.uint64(g)
    total = np.zeros(flat.shape, dtype=np.int64)
    cnt = np.zeros(flat.shape, dtype=np.int64)
    for i in range(1, m + 1):
        match = (hash_u64(flat, np.uint64(i)) % np.uint64(g)) == ys
        total += np.where(match, i, 0)
        cnt += match
    mean = (total / cnt).reshape(n_users, n_seeds)
    # max mean per user; ties broken by the lowest seed
    best = mean.max(axis=1, keepdims=True)
    tied = mean >= best  # exact float equality is fine: identical arithmetic
    masked = np.where(tied, pool, np.uint64(0xFFFFFFFFFFFFFFFF))
    return masked.min(axis=1)


def best_pool_seed(pool: np.ndarray, m: int, g: int) -> np.ndarray:
    """For each row of candidate seeds, pick the one whose hash preimage of
    hash(seed, m) has the largest mean bin index (lowest seed on ties)."""
    pool = np.ascontiguousarray(pool, dtype=np.uint64)
    if _USE_NUMBA:
        return _best_pool_seed_nb(pool, m, g)
    return _best_pool_seed_np(pool, m, g)
