"""Counter-based keyed random streams.

Every random quantity in the simulator is a pure function of
``(seed, stream key, index)``.  The generator is a SplitMix64-style
counter construction: a 64-bit stream key is derived by chain-hashing
the key parts, and the n-th variate of the stream is the avalanche mix
of ``key + (n+1)*GOLDEN``.  This makes any single stream regenerable in
O(length) without touching the others, which is what exact coupling and
per-stream tests rely on.

All helpers exist in two flavors: vectorized (numpy arrays, used by the
event builders) and scalar (plain ints/floats, usable inside numba
kernels).
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF
_INV53 = 1.0 / (1 << 53)

# Stream kinds.  A stream is identified by (seed, site, kind, index2)
# where index2 disambiguates multiple streams of the same kind at one
# site (arrow offset index, dot layer index, ...).
ARROW_TIMES = 0
ARROW_COINS = 1
CROSS_TIMES = 2
DOT_TIMES = 3
DOT_COINS = 4
INIT_DRAW = 5
THAW_CLOCK = 6
SITE_STREAM = 7   # superposed per-site stream of the fast engine
SITE_TYPE = 8
SITE_COIN = 9
SCRATCH = 15


def mix64(x: int) -> int:
    """SplitMix64 finalizer (scalar)."""
    x &= _MASK
    x ^= x >> 30
    x = (x * _MIX1) & _MASK
    x ^= x >> 27
    x = (x * _MIX2) & _MASK
    x ^= x >> 31
    return x


def mix64_array(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def stream_key(seed: int, site: int, kind: int, index2: int = 0) -> int:
    """Derive the 64-bit key of one stream by chain-hashing the parts."""
    k = mix64(seed & _MASK)
    k = mix64(k ^ ((site & _MASK) * 0xD6E8FEB86659FD93 & _MASK))
    k = mix64(k ^ ((kind & _MASK) * 0xA3B195354A39B70D & _MASK))
    k = mix64(k ^ ((index2 & _MASK) * 0x1B03738712FAD5C9 & _MASK))
    return k


def stream_keys(seed: int, sites: np.ndarray, kind: int,
                index2: np.ndarray | int = 0) -> np.ndarray:
    """Vectorized :func:`stream_key` over site / index2 arrays."""
    sites = np.asarray(sites, dtype=np.uint64)
    idx2 = np.broadcast_to(np.asarray(index2, dtype=np.uint64), sites.shape)
    kind_mul = np.uint64((kind * 0xA3B195354A39B70D) & _MASK)
    with np.errstate(over="ignore"):
        k = np.full(sites.shape, mix64(seed & _MASK), dtype=np.uint64)
        k = mix64_array(k ^ (sites * np.uint64(0xD6E8FEB86659FD93)))
        k = mix64_array(k ^ kind_mul)
        k = mix64_array(k ^ (idx2 * np.uint64(0x1B03738712FAD5C9)))
    return k


def uniform(key: int, index: int) -> float:
    """n-th U[0,1) variate of a stream (scalar)."""
    z = mix64((key + ((index + 1) * GOLDEN)) & _MASK)
    return (z >> 11) * _INV53


def uniforms(key: int, start: int, n: int) -> np.ndarray:
    """Contiguous block of U[0,1) variates ``start .. start+n-1``."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    z = mix64_array(np.uint64(key) + idx * np.uint64(GOLDEN))
    return (z >> np.uint64(11)) * _INV53


def uniform_grid(keys: np.ndarray, start: int, n: int) -> np.ndarray:
    """(len(keys), n) block of U[0,1) variates, one row per stream."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    z = keys.astype(np.uint64)[:, None] + idx[None, :] * np.uint64(GOLDEN)
    z = mix64_array(z)
    return (z >> np.uint64(11)) * _INV53


def exponential(key: int, index: int, rate: float) -> float:
    """n-th Exp(rate) variate of a stream (scalar)."""
    return -np.log1p(-uniform(key, index)) / rate


def poisson_times(key: int, rate: float, horizon: float) -> np.ndarray:
    """Arrival times in (0, horizon] of a rate-``rate`` Poisson stream.

    Inter-arrival gaps are consumed sequentially from the stream, so the
    result is independent of how many chunks were generated internally.
    """
    if rate <= 0.0:
        return np.empty(0, dtype=np.float64)
    out = []
    t = 0.0
    idx = 0
    chunk = max(16, int(rate * horizon + 6.0 * np.sqrt(rate * horizon) + 16))
    while t <= horizon:
        u = uniforms(key, idx, chunk)
        gaps = -np.log1p(-u) / rate
        times = t + np.cumsum(gaps)
        idx += chunk
        t = times[-1]
        out.append(times)
        chunk = max(16, chunk // 4)
    times = np.concatenate(out)
    return times[times <= horizon]


def poisson_times_grid(keys: np.ndarray, rate: float, horizon: float,
                       batch: int = 8192):
    """Arrival times for many streams of a common rate.

    Yields ``(stream_indices, times)`` pairs where ``stream_indices``
    maps each time to its row in ``keys``.  Each stream's gap sequence
    is identical to :func:`poisson_times` on that key alone.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    mean = rate * horizon
    n0 = max(16, int(mean + 6.0 * np.sqrt(mean) + 16))
    for lo in range(0, len(keys), batch):
        kb = keys[lo:lo + batch]
        u = uniform_grid(kb, 0, n0)
        times = np.cumsum(-np.log1p(-u) / rate, axis=1)
        # finish the rare streams whose chunk fell short of the horizon
        short = np.nonzero(times[:, -1] <= horizon)[0]
        rows = [times]
        extra_idx = {}
        for r in short:
            t = times[r, -1]
            idx = n0
            parts = []
            while t <= horizon:
                u2 = uniforms(int(kb[r]), idx, 64)
                g = -np.log1p(-u2) / rate
                tt = t + np.cumsum(g)
                idx += 64
                t = tt[-1]
                parts.append(tt)
            extra_idx[r] = np.concatenate(parts)
        mask = times <= horizon
        counts = mask.sum(axis=1)
        for r, tt in extra_idx.items():
            counts[r] += (tt <= horizon).sum()
        stream_idx = np.repeat(np.arange(lo, lo + len(kb)), counts)
        if extra_idx:
            chunks = []
            for r in range(len(kb)):
                t_r = times[r][mask[r]]
                if r in extra_idx:
                    tt = extra_idx[r]
                    t_r = np.concatenate([t_r, tt[tt <= horizon]])
                chunks.append(t_r)
            all_times = np.concatenate(chunks)
        else:
            all_times = times[mask]
        yield stream_idx, all_times
