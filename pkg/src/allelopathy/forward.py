"""Forward evolution: exact replay of the event set from an initial state.

Two engines produce bit-identical results on the same representation:
``fast`` (jitted, default) and ``reference`` (a deliberately naive
Python fold used as the independent oracle in tests).  Snapshots and
densities are recorded cadlag: the sample at time t reflects all events
with time <= t.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import engine, rng
from .graphical import ARROW, CROSS, DOT, EventTable, GraphicalRep, \
    blue_threshold, red_threshold
from .lattice import Lattice, Params, SiteState, densities, state_counts
from .stats import wilson_interval

LEGAL_JUMPS = {  # (old, new) pairs reachable under the rate table
    (0, 1), (3, 1), (0, 2), (1, 3), (1, 0), (3, 0), (2, 0),
}


@dataclass
class VariantView:
    """How one parameter variant reads a (possibly shared) event set.

    ``dot_coin_thr`` keeps a dot iff its coin is below the threshold
    (gamma_variant / gamma_build); ``layer_count`` keeps dot layers
    with index < layer_count.
    """

    blue_thr: float
    red_thr: float
    gamma_inf: bool
    dot_coin_thr: float = 1.0
    layer_count: int = 127

    @staticmethod
    def for_params(p: Params, rep: GraphicalRep) -> "VariantView":
        dot_thr = 1.0
        if not p.gamma_is_inf and rep.dot_rates:
            build_gamma = sum(rep.dot_rates)
            if p.gamma > build_gamma + 1e-12:
                raise ValueError("variant gamma exceeds the build dot rate")
            dot_thr = p.gamma / build_gamma
        return VariantView(
            blue_thr=blue_threshold(p.lambda1, rep.build_rate),
            red_thr=red_threshold(p.lambda2, rep.build_rate),
            gamma_inf=p.gamma_is_inf,
            dot_coin_thr=dot_thr,
        )


@dataclass
class Trajectory:
    """Sampled observables of one forward run."""

    times: np.ndarray                 # sample times
    counts: np.ndarray                # (n_samples, 4) int64
    snapshots: dict                   # time -> uint8 configuration copy
    final: np.ndarray                 # configuration at the last sample

    @property
    def densities(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def survival(self, species: int) -> np.ndarray:
        """Boolean per sample: any site of ``species`` remains."""
        return self.counts[:, species] > 0


def apply_event(config: np.ndarray, event, p: Params,
                build_rate: float | None = None) -> np.ndarray:
    """Apply a single event to a copy of ``config`` and return it.

    ``event`` is a row view: (time, kind, site, target, coin).  The
    pure-functional form used by tests; folds use the in-place kernels.
    """
    time, kind, site, target, coin = event
    out = config.copy()
    lam = build_rate if build_rate is not None else max(p.lambda1, p.lambda2)
    if kind == ARROW:
        s_src, s_tgt = out[site], out[target]
        if s_src == SiteState.BLUE and coin >= blue_threshold(p.lambda1, lam) \
                and s_tgt in (SiteState.FREE, SiteState.FROZEN):
            out[target] = SiteState.BLUE
        elif s_src == SiteState.RED and coin >= red_threshold(p.lambda2, lam) \
                and s_tgt == SiteState.FREE:
            out[target] = SiteState.RED
    elif kind == CROSS:
        if out[site] == SiteState.BLUE:
            out[site] = SiteState.FREE if p.gamma_is_inf else SiteState.FROZEN
        elif out[site] == SiteState.RED:
            out[site] = SiteState.FREE
    elif kind == DOT:
        if not p.gamma_is_inf and out[site] == SiteState.FROZEN:
            out[site] = SiteState.FREE
    return out


def reference_fold(config0: np.ndarray, table: EventTable, view: VariantView,
                   sample_times, check_transitions: bool = False):
    """Naive per-event Python fold; the oracle the fast engine is held to."""
    state = config0.copy()
    samples = []
    js = 0
    sample_times = list(sample_times)
    for i in range(len(table)):
        t = table.time[i]
        while js < len(sample_times) and sample_times[js] < t:
            samples.append(state.copy())
            js += 1
        old = state.copy() if check_transitions else None
        k = table.kind[i]
        site = table.site[i]
        if k == ARROW:
            tgt = table.target[i]
            if state[site] == 1 and table.coin[i] >= view.blue_thr \
                    and state[tgt] in (0, 3):
                state[tgt] = 1
            elif state[site] == 2 and table.coin[i] >= view.red_thr \
                    and state[tgt] == 0:
                state[tgt] = 2
        elif k == CROSS:
            if state[site] == 1:
                state[site] = 0 if view.gamma_inf else 3
            elif state[site] == 2:
                state[site] = 0
        else:
            if (not view.gamma_inf) and table.layer[i] < view.layer_count \
                    and table.coin[i] < view.dot_coin_thr and state[site] == 3:
                state[site] = 0
        if check_transitions:
            changed = np.nonzero(old != state)[0]
            for c in changed:
                if (int(old[c]), int(state[c])) not in LEGAL_JUMPS:
                    raise AssertionError(
                        f"illegal transition {old[c]}->{state[c]} at {c}")
    while js < len(sample_times):
        samples.append(state.copy())
        js += 1
    return state, samples


@dataclass
class ForwardStateIndex:
    """Per-site transition log allowing O(log) state queries in time."""

    config0: np.ndarray
    site_times: list            # per site: float64 array of change times
    site_states: list           # per site: uint8 array of new states
    horizon: float

    def state(self, site: int, t: float, side: str = "post") -> int:
        """State of ``site`` at time t; ``pre`` excludes events at t."""
        times = self.site_times[site]
        mode = "right" if side == "post" else "left"
        k = np.searchsorted(times, t, side=mode)
        if k == 0:
            return int(self.config0[site])
        return int(self.site_states[site][k - 1])

    def config_at(self, t: float) -> np.ndarray:
        out = self.config0.copy()
        for s in range(len(out)):
            out[s] = self.state(s, t)
        return out


def run(config0: np.ndarray, rep: GraphicalRep, sample_times,
        snapshot_times=(), variant: VariantView | None = None,
        engine_kind: str = "fast", record_transitions: bool = False,
        check_transitions: bool = False):
    """Fold the representation over ``config0``.

    Returns a :class:`Trajectory`; with ``record_transitions=True``
    returns ``(Trajectory, ForwardStateIndex)``.
    """
    sample_times = np.asarray(sample_times, dtype=np.float64)
    if len(sample_times) == 0:
        raise ValueError("need at least one sample time")
    if np.any(np.diff(sample_times) < 0):
        raise ValueError("sample times must be sorted increasing")
    if sample_times[-1] > rep.horizon + 1e-12:
        raise ValueError("sample times exceed the horizon")
    snapshot_times = np.asarray(sorted(snapshot_times), dtype=np.float64)
    if len(np.setdiff1d(snapshot_times, sample_times)) > 0:
        raise ValueError("snapshot times must be a subset of sample times")
    if variant is None:
        if rep.params is None:
            raise ValueError("representation carries no params; "
                             "pass a VariantView explicitly")
        variant = VariantView.for_params(rep.params, rep)
    view = variant
    # the trajectory ends at the last sample: later events are not folded
    t = rep.table
    hi = int(np.searchsorted(t.time, sample_times[-1], side="right"))
    t = t.slice(0, hi)
    state = np.array(config0, dtype=np.uint8, copy=True)
    if len(state) != rep.nsites:
        raise ValueError("configuration does not match the lattice")

    if engine_kind == "reference":
        final, samples = reference_fold(state, t, view, sample_times,
                                        check_transitions)
        counts = np.stack([state_counts(s) for s in samples])
        snaps = {float(ts): samples[int(np.searchsorted(sample_times, ts))]
                 for ts in snapshot_times}
        traj = Trajectory(times=sample_times, counts=counts,
                          snapshots=snaps, final=final)
        if record_transitions:
            raise ValueError("transition recording needs the fast engine")
        return traj

    out_counts = np.zeros((len(sample_times), 4), dtype=np.int64)
    out_snaps = np.zeros((len(snapshot_times), rep.nsites), dtype=np.uint8)
    if record_transitions:
        cap = len(t) + 1
        tr_site = np.empty(cap, dtype=np.int64)
        tr_time = np.empty(cap, dtype=np.float64)
        tr_new = np.empty(cap, dtype=np.uint8)
    else:
        tr_site = np.empty(0, dtype=np.int64)
        tr_time = np.empty(0, dtype=np.float64)
        tr_new = np.empty(0, dtype=np.uint8)
    ntr = engine.fold_table(
        t.time, t.kind, t.site, t.target, t.coin, t.layer, state,
        view.blue_thr, view.red_thr, view.dot_coin_thr,
        view.layer_count, view.gamma_inf,
        sample_times, out_counts, snapshot_times, out_snaps,
        record_transitions, tr_site, tr_time, tr_new)
    snaps = {float(ts): out_snaps[i].copy()
             for i, ts in enumerate(snapshot_times)}
    traj = Trajectory(times=sample_times, counts=out_counts,
                      snapshots=snaps, final=state)
    if not record_transitions:
        return traj
    idx = _build_state_index(config0, rep.nsites, float(sample_times[-1]),
                             tr_site[:ntr], tr_time[:ntr], tr_new[:ntr])
    return traj, idx


def _build_state_index(config0, nsites, horizon, tr_site, tr_time, tr_new):
    order = np.lexsort((tr_time, tr_site))
    tr_site, tr_time, tr_new = tr_site[order], tr_time[order], tr_new[order]
    bounds = np.searchsorted(tr_site, np.arange(nsites + 1))
    site_times = [tr_time[bounds[s]:bounds[s + 1]] for s in range(nsites)]
    site_states = [tr_new[bounds[s]:bounds[s + 1]] for s in range(nsites)]
    return ForwardStateIndex(config0=np.asarray(config0, dtype=np.uint8),
                             site_times=site_times, site_states=site_states,
                             horizon=horizon)


def fold_states(config0, rep, params, sample_times, **kw):
    """Convenience: run() with the variant derived from ``params``."""
    return run(config0, rep, sample_times,
               variant=VariantView.for_params(params, rep), **kw)


# ---------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------

def make_initial(kind: str, seed: int, lattice: Lattice) -> np.ndarray:
    """Build a deterministic initial configuration.

    Kinds: ``all-1``, ``all-2``, ``all-0``, ``product:p0,p1,p2,p3``
    (independent per-site draws), ``single-seed:i`` (one site of state
    i at the lattice center, rest free).
    """
    n = lattice.nsites
    if kind == "all-0":
        return np.zeros(n, dtype=np.uint8)
    if kind == "all-1":
        return np.full(n, 1, dtype=np.uint8)
    if kind == "all-2":
        return np.full(n, 2, dtype=np.uint8)
    if kind.startswith("single-seed:"):
        species = int(kind.split(":", 1)[1])
        if species not in (1, 2, 3):
            raise ValueError("single-seed species must be 1, 2 or 3")
        out = np.zeros(n, dtype=np.uint8)
        out[lattice.index(lattice.center())] = species
        return out
    if kind.startswith("product:"):
        probs = [float(x) for x in kind.split(":", 1)[1].split(",")]
        if len(probs) != 4 or any(p < 0 for p in probs) \
                or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("product densities must be 4 nonnegative "
                             "values summing to 1")
        edges = np.cumsum(probs)
        keys = rng.stream_keys(seed, np.arange(n, dtype=np.int64),
                               rng.INIT_DRAW)
        u = (rng.mix64_array(keys + np.uint64(rng.GOLDEN))
             >> np.uint64(11)) * (1.0 / (1 << 53))
        return np.searchsorted(edges, u, side="right").astype(np.uint8)
    raise ValueError(f"unknown initial condition {kind!r}")


# ---------------------------------------------------------------------
# Monte-Carlo survival estimate
# ---------------------------------------------------------------------

def survival_probability(p: Params, species: int, init_kind: str,
                         horizon: float, replicas: int, lattice: Lattice,
                         base_seed: int = 0, threads: int = 1):
    """Fraction of replicas with the species alive at the horizon.

    Finite-horizon stand-in for survival; replica r uses seed
    ``base_seed + r``.  Returns ``(estimate, (lo, hi))`` with a Wilson
    95% interval.
    """
    if replicas < 1:
        raise ValueError("need replicas >= 1")

    def one(r):
        seed = base_seed + r
        rep = build_events_cached(seed, p, lattice, horizon)
        cfg = make_initial(init_kind, seed, lattice)
        traj = fold_states(cfg, rep, p, [horizon])
        return bool(traj.counts[-1, species] > 0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            alive = list(ex.map(one, range(replicas)))
    else:
        alive = [one(r) for r in range(replicas)]
    k = int(np.sum(alive))
    return k / replicas, wilson_interval(k, replicas)


def build_events_cached(seed, p, lattice, horizon):
    # thin wrapper so survival_probability stays importable standalone
    from .graphical import build_events
    return build_events(seed, p, lattice, horizon)
