import numpy as np

from allelopathy import rng


def test_same_key_same_stream():
    k = rng.stream_key(1, 5, rng.CROSS_TIMES)
    assert np.array_equal(rng.uniforms(k, 0, 100), rng.uniforms(k, 0, 100))
    assert np.array_equal(rng.poisson_times(k, 2.0, 10.0),
                          rng.poisson_times(k, 2.0, 10.0))


def test_distinct_keys_differ():
    a = rng.stream_key(1, 5, rng.CROSS_TIMES)
    b = rng.stream_key(1, 6, rng.CROSS_TIMES)
    c = rng.stream_key(1, 5, rng.DOT_TIMES)
    d = rng.stream_key(2, 5, rng.CROSS_TIMES)
    assert len({a, b, c, d}) == 4
    assert not np.array_equal(rng.uniforms(a, 0, 50), rng.uniforms(b, 0, 50))


def test_uniform_block_matches_scalar():
    k = rng.stream_key(3, 0, rng.ARROW_COINS, 2)
    block = rng.uniforms(k, 10, 20)
    singles = [rng.uniform(k, i) for i in range(10, 30)]
    assert np.allclose(block, singles, rtol=0, atol=0)


def test_uniform_range_and_mean():
    k = rng.stream_key(4, 0, rng.SCRATCH)
    u = rng.uniforms(k, 0, 200_000)
    assert np.all((u >= 0.0) & (u < 1.0))
    # mean of U[0,1): sd of the sample mean is 1/sqrt(12 n)
    assert abs(u.mean() - 0.5) < 3.0 / np.sqrt(12 * len(u))


def test_poisson_times_sorted_within_horizon():
    k = rng.stream_key(5, 1, rng.DOT_TIMES)
    t = rng.poisson_times(k, 3.0, 25.0)
    assert np.all(np.diff(t) > 0)
    assert t[0] > 0 and t[-1] <= 25.0


def test_poisson_count_mean():
    # rate 0.05 over horizon 50 -> Poisson mean 2.5 per stream
    keys = rng.stream_keys(11, np.arange(10_000, dtype=np.int64),
                           rng.DOT_TIMES)
    counts = np.zeros(10_000)
    for idx, times in rng.poisson_times_grid(keys, 0.05, 50.0):
        counts[:] += np.bincount(idx, minlength=10_000)[:len(counts)]
    sigma = np.sqrt(2.5 / 10_000)
    assert abs(counts.mean() - 2.5) < 3 * sigma


def test_exponential_gap_mean():
    # >= 1e4 inter-arrival gaps at rate 1: mean 1 within 3 sigma
    gaps = []
    for site in range(300):
        k = rng.stream_key(7, site, rng.CROSS_TIMES)
        t = rng.poisson_times(k, 1.0, 50.0)
        gaps.append(np.diff(np.concatenate([[0.0], t])))
    gaps = np.concatenate(gaps)
    assert len(gaps) >= 10_000
    assert abs(gaps.mean() - 1.0) < 3.0 / np.sqrt(len(gaps))


def test_batch_grid_equals_single_stream_regeneration():
    keys = rng.stream_keys(9, np.arange(200, dtype=np.int64),
                           rng.ARROW_TIMES, 3)
    got = {}
    for idx, times in rng.poisson_times_grid(keys, 0.7, 30.0):
        for s in np.unique(idx):
            got[int(s)] = times[idx == s]
    for s in (0, 17, 141, 199):
        alone = rng.poisson_times(int(keys[s]), 0.7, 30.0)
        assert np.array_equal(got[s], alone)


def test_disjoint_stream_count_correlation():
    # counts of two unrelated streams across 1e3 seeds: |rho| < 0.05
    n = 1000
    a = np.empty(n)
    b = np.empty(n)
    for seed in range(n):
        ka = rng.stream_key(seed, 0, rng.CROSS_TIMES)
        kb = rng.stream_key(seed, 1, rng.DOT_TIMES, 2)
        a[seed] = len(rng.poisson_times(ka, 1.0, 20.0))
        b[seed] = len(rng.poisson_times(kb, 1.0, 20.0))
    rho = np.corrcoef(a, b)[0, 1]
    assert abs(rho) < 0.05
