"""Jitted event-fold kernels.

Three kernels do the heavy lifting:

* ``fold_table``       -- single-variant fold over a pre-built event table.
* ``fold_table_multi`` -- several variants folded in one pass over one
  shared table (layered dots; the top variant may carry an extra lazy
  thaw clock so huge thaw rates never have to be materialized).
* ``stream_kernel``    -- generates its own per-site superposed event
  streams on the fly (heap-merged) with lazy per-episode thaw clocks;
  used by the block experiments where table materialization would not
  fit.  Law-equivalent to the table construction, but a distinct
  randomness layout: never mix the two within one experiment.

All kernels are strictly sequential and deterministic; parallelism
happens one level up, across replicas.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    NUMBA = True
except ImportError:                       # pragma: no cover - env has numba
    NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

_G = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)

FREE, BLUE, RED, FROZEN = np.uint8(0), np.uint8(1), np.uint8(2), np.uint8(3)

ARROW, CROSS, DOT = 0, 1, 2

# stream kind codes, must match allelopathy.rng
_K_THAW = np.uint64(6)
_K_SITE_STREAM = np.uint64(7)
_K_SITE_TYPE = np.uint64(8)
_K_SITE_COIN = np.uint64(9)


@njit(cache=True, nogil=True, inline="always")
def _mix64(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    x = x ^ (x >> np.uint64(31))
    return x


@njit(cache=True, nogil=True, inline="always")
def _u01(key, index):
    z = _mix64(key + (np.uint64(index) + np.uint64(1)) * _G)
    return (z >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True, inline="always")
def _key4(seed, site, kind, index2):
    k = _mix64(np.uint64(seed))
    k = _mix64(k ^ (np.uint64(site) * np.uint64(0xD6E8FEB86659FD93)))
    k = _mix64(k ^ (np.uint64(kind) * np.uint64(0xA3B195354A39B70D)))
    k = _mix64(k ^ (np.uint64(index2) * np.uint64(0x1B03738712FAD5C9)))
    return k


# ---------------------------------------------------------------------
# binary heap on parallel arrays (time, payload, aux)
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _heap_push(ht, hp, ha, size, t, p, a):
    i = size
    ht[i] = t
    hp[i] = p
    ha[i] = a
    while i > 0:
        parent = (i - 1) >> 1
        if ht[parent] <= ht[i]:
            break
        ht[parent], ht[i] = ht[i], ht[parent]
        hp[parent], hp[i] = hp[i], hp[parent]
        ha[parent], ha[i] = ha[i], ha[parent]
        i = parent
    return size + 1


@njit(cache=True, nogil=True, inline="always")
def _heap_pop(ht, hp, ha, size):
    size -= 1
    ht[0], ht[size] = ht[size], ht[0]
    hp[0], hp[size] = hp[size], hp[0]
    ha[0], ha[size] = ha[size], ha[0]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        small = i
        if l < size and ht[l] < ht[small]:
            small = l
        if r < size and ht[r] < ht[small]:
            small = r
        if small == i:
            break
        ht[small], ht[i] = ht[i], ht[small]
        hp[small], hp[i] = hp[i], hp[small]
        ha[small], ha[i] = ha[i], ha[small]
        i = small
    return size


# ---------------------------------------------------------------------
# single-variant fold over a sorted event table
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def fold_table(times, kinds, sites, targets, coins, layers,
               state, blue_thr, red_thr, dot_thr, layer_count, gamma_inf,
               sample_times, out_counts,
               snap_times, out_snaps,
               record, trans_site, trans_time, trans_new):
    """Replay events in order, recording densities and transitions.

    Samples record the state after all events with time <= sample time.
    Returns the number of recorded transitions.
    """
    n = len(times)
    nsamp = len(sample_times)
    nsnap = len(snap_times)
    counts = np.zeros(4, dtype=np.int64)
    for s in state:
        counts[s] += 1
    js = 0
    jk = 0
    ntr = 0
    for i in range(n):
        t = times[i]
        while js < nsamp and sample_times[js] < t:
            for c in range(4):
                out_counts[js, c] = counts[c]
            js += 1
        while jk < nsnap and snap_times[jk] < t:
            out_snaps[jk, :] = state
            jk += 1
        k = kinds[i]
        site = sites[i]
        new = np.uint8(255)
        who = site
        if k == ARROW:
            tgt = targets[i]
            s_src = state[site]
            s_tgt = state[tgt]
            if s_src == BLUE and coins[i] >= blue_thr and \
                    (s_tgt == FREE or s_tgt == FROZEN):
                new = BLUE
                who = tgt
            elif s_src == RED and coins[i] >= red_thr and s_tgt == FREE:
                new = RED
                who = tgt
        elif k == CROSS:
            s_here = state[site]
            if s_here == BLUE:
                new = FREE if gamma_inf else FROZEN
            elif s_here == RED:
                new = FREE
        else:  # DOT
            if (not gamma_inf) and layers[i] < layer_count \
                    and coins[i] < dot_thr and state[site] == FROZEN:
                new = FREE
        if new != np.uint8(255):
            counts[state[who]] -= 1
            counts[new] += 1
            state[who] = new
            if record:
                trans_site[ntr] = who
                trans_time[ntr] = t
                trans_new[ntr] = new
                ntr += 1
    while js < nsamp:
        for c in range(4):
            out_counts[js, c] = counts[c]
        js += 1
    while jk < nsnap:
        out_snaps[jk, :] = state
        jk += 1
    return ntr


# ---------------------------------------------------------------------
# multi-variant fold (shared events, per-variant thinning)
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def fold_table_multi(times, kinds, sites, targets, coins,
                     dot_flat, dot_bounds, n_layers,
                     states, blue_thrs, red_thrs, layer_counts,
                     gamma_infs, clock_variant, clock_rate, seed,
                     sample_times, out_counts, horizon):
    """Fold K variants over one shared arrow/cross table in one pass.

    Thaws are event-free: per (site, layer) the sorted dot times live
    in ``dot_flat[dot_bounds[site*n_layers+l]:dot_bounds[...+1]]``; on
    freezing, a variant's pending thaw is the first dot at or after the
    freeze among its layers (plus, for ``clock_variant``, a lazy
    exponential clock of rate ``clock_rate`` standing in for a never
    materialized top layer).  A dot only acts on a frozen site, so
    consulting dots per frozen episode is exact.
    """
    K = states.shape[0]
    nsites = states.shape[1]
    n = len(times)
    nsamp = len(sample_times)
    counts = np.zeros((K, 4), dtype=np.int64)
    for v in range(K):
        for s in states[v]:
            counts[v, s] += 1
    episode = np.zeros((K, nsites), dtype=np.int64)
    hcap = K * nsites + 64
    ht = np.empty(hcap, dtype=np.float64)
    hp = np.empty(hcap, dtype=np.int64)
    ha = np.empty(hcap, dtype=np.int64)
    hsize = 0

    js = 0
    i = 0
    inf = np.inf
    while i < n or hsize > 0 or js < nsamp:
        t_ev = times[i] if i < n else inf
        t_th = ht[0] if hsize > 0 else inf
        t_sa = sample_times[js] if js < nsamp else inf
        if t_sa < t_ev and t_sa < t_th:
            for v in range(K):
                for c in range(4):
                    out_counts[v, js, c] = counts[v, c]
            js += 1
            continue
        if hsize > 0 and t_th <= t_ev:
            site = hp[0] // K
            v = hp[0] % K
            epi = ha[0]
            hsize = _heap_pop(ht, hp, ha, hsize)
            if states[v, site] == FROZEN and episode[v, site] == epi:
                counts[v, FROZEN] -= 1
                counts[v, FREE] += 1
                states[v, site] = FREE
            continue
        k = kinds[i]
        site = sites[i]
        if k == ARROW:
            tgt = targets[i]
            u = coins[i]
            for v in range(K):
                s_src = states[v, site]
                s_tgt = states[v, tgt]
                if s_src == BLUE and u >= blue_thrs[v] and \
                        (s_tgt == FREE or s_tgt == FROZEN):
                    counts[v, s_tgt] -= 1
                    counts[v, BLUE] += 1
                    states[v, tgt] = BLUE
                elif s_src == RED and u >= red_thrs[v] and s_tgt == FREE:
                    counts[v, FREE] -= 1
                    counts[v, RED] += 1
                    states[v, tgt] = RED
        else:  # CROSS
            for v in range(K):
                s_here = states[v, site]
                if s_here == BLUE:
                    if gamma_infs[v]:
                        counts[v, BLUE] -= 1
                        counts[v, FREE] += 1
                        states[v, site] = FREE
                    else:
                        counts[v, BLUE] -= 1
                        counts[v, FROZEN] += 1
                        states[v, site] = FROZEN
                        episode[v, site] += 1
                        thaw = inf
                        for lay in range(layer_counts[v]):
                            k0 = lay * nsites + site
                            lo = dot_bounds[k0]
                            hi = dot_bounds[k0 + 1]
                            j = _bisect_left(dot_flat, times[i], lo, hi)
                            if j < hi and dot_flat[j] < thaw:
                                thaw = dot_flat[j]
                        if v == clock_variant:
                            key = _key4(seed, site, _K_THAW, 0)
                            uu = _u01(key, episode[v, site])
                            tc = times[i] - np.log1p(-uu) / clock_rate
                            if tc < thaw:
                                thaw = tc
                        if thaw <= horizon:
                            hsize = _heap_push(ht, hp, ha, hsize, thaw,
                                               site * K + v, episode[v, site])
                elif s_here == RED:
                    counts[v, RED] -= 1
                    counts[v, FREE] += 1
                    states[v, site] = FREE
        i += 1
    return 0


@njit(cache=True, nogil=True, inline="always")
def _bisect_left(arr, x, lo, hi):
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------
# streaming kernel: in-kernel generation, masking, blocking detection
# ---------------------------------------------------------------------

@njit(cache=True, nogil=True)
def stream_kernel(seed, state, neighbor_tab, mask, kappa,
                  lam, blue_thr, red_thr, gamma, gamma_inf, horizon,
                  detect_blocking, stop_on_block, stop_when_calm):
    """Fold one run with per-site superposed streams generated lazily.

    Per unmasked site one Poisson stream at rate ``lam + 1`` supplies
    arrows (split uniformly over offsets, coin attached) and crosses;
    frozen episodes draw a thaw time from a per-episode clock.  Events
    touching masked sites are suppressed.  Returns
    ``(blocked_flag, block_time, end_time)``.

    ``detect_blocking``: watch for red-usable arrows whose target lies
    in ``kappa`` and is frozen at that moment.  ``stop_when_calm``
    terminates once no blue and no frozen site remains (nothing can
    ever freeze again, so the blocked flag is final).
    """
    nsites = state.shape[0]
    card = neighbor_tab.shape[1]
    rate = lam + 1.0
    p_arrow = lam / rate

    gap_idx = np.zeros(nsites, dtype=np.int64)
    type_idx = np.zeros(nsites, dtype=np.int64)
    coin_idx = np.zeros(nsites, dtype=np.int64)
    episode = np.zeros(nsites, dtype=np.int64)

    hcap = 2 * nsites + 64
    ht = np.empty(hcap, dtype=np.float64)
    hp = np.empty(hcap, dtype=np.int64)
    ha = np.empty(hcap, dtype=np.int64)
    hsize = 0

    n_blue = 0
    n_frozen = 0
    for s in range(nsites):
        if not mask[s]:
            continue        # inert sites never change; ignore for calm test
        if state[s] == BLUE:
            n_blue += 1
        elif state[s] == FROZEN:
            n_frozen += 1

    for s in range(nsites):
        if not mask[s]:
            continue
        key = _key4(seed, s, _K_SITE_STREAM, 0)
        t0 = -np.log1p(-_u01(key, 0)) / rate
        gap_idx[s] = 1
        if t0 <= horizon:
            hsize = _heap_push(ht, hp, ha, hsize, t0, 2 * s, 0)

    blocked = False
    block_time = -1.0
    t = 0.0
    while hsize > 0:
        t = ht[0]
        site = hp[0] >> 1
        code = hp[0] & 1
        epi = ha[0]
        hsize = _heap_pop(ht, hp, ha, hsize)
        if code == 1:
            if state[site] == FROZEN and episode[site] == epi:
                state[site] = FREE
                n_frozen -= 1
        else:
            # schedule this site's next stream event
            key = _key4(seed, site, _K_SITE_STREAM, 0)
            gap = -np.log1p(-_u01(key, gap_idx[site])) / rate
            gap_idx[site] += 1
            nxt = t + gap
            if nxt <= horizon:
                hsize = _heap_push(ht, hp, ha, hsize, nxt, 2 * site, 0)
            tkey = _key4(seed, site, _K_SITE_TYPE, 0)
            u = _u01(tkey, type_idx[site])
            type_idx[site] += 1
            if u < p_arrow:
                off = int(u / p_arrow * card)
                if off >= card:
                    off = card - 1
                tgt = neighbor_tab[site, off]
                if mask[tgt]:
                    ckey = _key4(seed, site, _K_SITE_COIN, 0)
                    coin = _u01(ckey, coin_idx[site])
                    coin_idx[site] += 1
                    s_src = state[site]
                    s_tgt = state[tgt]
                    if detect_blocking and coin >= red_thr and kappa[tgt] \
                            and s_tgt == FROZEN and not blocked:
                        blocked = True
                        block_time = t
                        if stop_on_block:
                            return True, block_time, t
                    if s_src == BLUE and coin >= blue_thr and \
                            (s_tgt == FREE or s_tgt == FROZEN):
                        if s_tgt == FROZEN:
                            n_frozen -= 1
                        state[tgt] = BLUE
                        n_blue += 1
                    elif s_src == RED and coin >= red_thr and s_tgt == FREE:
                        state[tgt] = RED
            else:
                s_here = state[site]
                if s_here == BLUE:
                    n_blue -= 1
                    if gamma_inf:
                        state[site] = FREE
                    else:
                        state[site] = FROZEN
                        n_frozen += 1
                        episode[site] += 1
                        kth = _key4(seed, site, _K_THAW, 0)
                        uth = _u01(kth, episode[site])
                        thaw = t - np.log1p(-uth) / gamma
                        if thaw <= horizon:
                            hsize = _heap_push(ht, hp, ha, hsize, thaw,
                                               2 * site + 1, episode[site])
                elif s_here == RED:
                    state[site] = FREE
        if stop_when_calm and n_blue == 0 and n_frozen == 0:
            return blocked, block_time, t
    return blocked, block_time, horizon


def warmup():
    """Compile the kernels on tiny inputs (avoids first-use stalls)."""
    state = np.zeros(4, dtype=np.uint8)
    t = np.array([0.5])
    fold_table(t, np.array([CROSS], np.uint8), np.array([0], np.int64),
               np.array([-1], np.int64), np.array([0.0]),
               np.array([0], np.int8), state, 0.0, 0.0, 1.0, 1, False,
               np.array([1.0]), np.zeros((1, 4), np.int64),
               np.empty(0), np.empty((0, 4), np.uint8),
               False, np.empty(0, np.int64), np.empty(0), np.empty(0, np.uint8))
    states = np.zeros((2, 4), dtype=np.uint8)
    fold_table_multi(t, np.array([CROSS], np.uint8), np.array([0], np.int64),
                     np.array([-1], np.int64), np.array([0.0]),
                     np.array([0.5]), np.zeros(9, np.int64), 1, states,
                     np.zeros(2), np.zeros(2),
                     np.ones(2, np.int64), np.zeros(2, np.bool_),
                     1, 1.0, np.uint64(1), np.array([1.0]),
                     np.zeros((2, 1, 4), np.int64), 1.0)
    nb = np.zeros((4, 2), dtype=np.int32)
    stream_kernel(np.uint64(1), state, nb, np.ones(4, np.bool_),
                  np.ones(4, np.bool_), 1.0, 0.0, 0.0, 1.0, False, 0.5,
                  False, False, False)
