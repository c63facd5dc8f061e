"""Small statistics helpers: intervals and ordered-trend tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054):
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def jonckheere_trend(groups, alternative: str = "increasing"):
    """Jonckheere-Terpstra test for an ordered trend across independent
    groups, normal approximation with tie-corrected null variance.

    Returns ``(statistic, one_sided_p)``.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if alternative == "decreasing":
        groups = [-g for g in groups]
    elif alternative != "increasing":
        raise ValueError("alternative must be increasing or decreasing")
    k = len(groups)
    stat = 0.0
    for i in range(k):
        a = np.sort(groups[i])
        for j in range(i + 1, k):
            b = groups[j]
            less = np.searchsorted(a, b, side="left")
            eq = np.searchsorted(a, b, side="right") - less
            stat += float(np.sum(less) + 0.5 * np.sum(eq))
    ns = np.array([len(g) for g in groups], dtype=np.float64)
    n = ns.sum()
    pooled = np.concatenate(groups)
    _, tie_counts = np.unique(pooled, return_counts=True)
    t = tie_counts.astype(np.float64)
    mean = (n * n - np.sum(ns ** 2)) / 4.0
    v1 = (n * (n - 1) * (2 * n + 5)
          - np.sum(ns * (ns - 1) * (2 * ns + 5))
          - np.sum(t * (t - 1) * (2 * t + 5))) / 72.0
    v2 = (np.sum(ns * (ns - 1) * (ns - 2)) * np.sum(t * (t - 1) * (t - 2))
          / (36.0 * n * (n - 1) * (n - 2)))
    v3 = (np.sum(ns * (ns - 1)) * np.sum(t * (t - 1))
          / (8.0 * n * (n - 1)))
    var = v1 + v2 + v3
    if var <= 0:
        return stat, 1.0
    z = (stat - mean) / math.sqrt(var)
    return stat, float(sps.norm.sf(z))


def permutation_trend_test(data, alternative: str = "increasing",
                           n_perm: int = 20000, seed: int = 0):
    """Within-replica permutation test for a monotone treatment trend.

    ``data`` has shape (replicas, treatments), treatments in the
    hypothesized order.  Rows are permuted independently (valid for
    coupled replicas, where values within a row are dependent but
    exchangeable under the no-trend null); the statistic is the
    rank-weighted Page L with mid-ranks for ties.  Returns
    ``(L_observed, one_sided_p)``.
    """
    data = np.asarray(data, dtype=np.float64)
    n, k = data.shape
    if alternative == "decreasing":
        data = data[:, ::-1]
    elif alternative != "increasing":
        raise ValueError("alternative must be increasing or decreasing")
    ranks = sps.rankdata(data, axis=1)
    w = np.arange(1, k + 1, dtype=np.float64)
    L_obs = float((ranks * w).sum())
    gen = np.random.default_rng(seed)
    count = 0
    for _ in range(n_perm):
        perm = gen.permuted(ranks, axis=1)
        if float((perm * w).sum()) >= L_obs - 1e-9:
            count += 1
    return L_obs, (count + 1) / (n_perm + 1)


def chi2_rate_match(counts, expected_probs):
    """Chi-square p-value for observed counts vs expected proportions."""
    counts = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(expected_probs, dtype=np.float64)
    exp = counts.sum() * probs / probs.sum()
    keep = exp > 0
    res = sps.chisquare(counts[keep], exp[keep])
    return float(res.pvalue)
