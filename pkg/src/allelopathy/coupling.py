"""Coupled runs: several parameter variants on one shared event set.

A coupled build draws arrows at the max arrow rate across variants and
dots at the max finite thaw rate; each variant reinterprets coins
(usability thresholds for arrows, keep-probability for dots) so its
marginal law is exact while the usable event sets are nested across
comparable variants.  Domination between two configurations is the
two-sided set containment: the bluer variant has no red site the redder
one lacks, and every blue site of the redder one.

``coupled_density_sweep`` is the large-scale form used for thaw-rate
trend experiments: dot layers replace coins (increments of the sorted
rates) and the top variant thaws through a lazy per-episode clock, so
arbitrarily large rates never materialize events.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .forward import Trajectory, VariantView, make_initial, run
from .graphical import GraphicalRep, build_events, blue_threshold, \
    red_threshold
from .lattice import Lattice, Params, SiteState


def check_domination(bluer: np.ndarray, redder: np.ndarray) -> bool:
    """True iff {bluer = red} is contained in {redder = red} and
    {redder = blue} is contained in {bluer = blue}."""
    if bluer.shape != redder.shape:
        raise ValueError("configurations live on different domains")
    return bool(np.all((bluer != 2) | (redder == 2))
                and np.all((redder != 1) | (bluer == 1)))


def comparable(a: Params, b: Params):
    """Classify an ordered variant pair.

    Returns ``(param_name, bluer_index)`` when exactly one of lambda1,
    lambda2, gamma differs (bluer_index is 0 if ``a`` is the variant
    favoring blue, else 1), or None when the pair is not comparable.
    """
    diffs = [name for name in ("lambda1", "lambda2", "gamma")
             if getattr(a, name) != getattr(b, name)]
    if len(diffs) != 1:
        return None
    name = diffs[0]
    av, bv = getattr(a, name), getattr(b, name)
    if name == "lambda2":          # larger lambda2 favors red
        return name, (1 if av > bv else 0)
    if name == "lambda1":          # larger lambda1 favors blue
        return name, (0 if av > bv else 1)
    return name, (0 if av < bv else 1)   # smaller gamma favors blue


@dataclass
class PairVerdict:
    pair: tuple[int, int]           # (bluer, redder) variant indices
    param: str
    holds: np.ndarray               # bool per sample time
    first_violation: tuple | None   # (time, site) or None


@dataclass
class CoupledRun:
    seed: int
    variants: list[Params]
    sample_times: np.ndarray
    trajectories: list[Trajectory]
    verdicts: list[PairVerdict]

    def report(self) -> dict:
        """JSON-ready per-pair, per-time verdict report."""
        return {
            "seed": self.seed,
            "sample_times": [float(t) for t in self.sample_times],
            "variants": [
                {"lambda1": v.lambda1, "lambda2": v.lambda2,
                 "gamma": None if v.gamma_is_inf else v.gamma}
                for v in self.variants],
            "pairs": [
                {"bluer": int(v.pair[0]), "redder": int(v.pair[1]),
                 "parameter": v.param,
                 "holds": [bool(h) for h in v.holds],
                 "first_violation": (
                     None if v.first_violation is None else
                     {"time": float(v.first_violation[0]),
                      "site": int(v.first_violation[1])})}
                for v in self.verdicts],
        }


def shared_representation(seed: int, variants: list[Params],
                          lattice: Lattice, horizon: float) -> GraphicalRep:
    """Build the event set every variant folds: max rates across variants."""
    base = variants[0]
    for v in variants[1:]:
        if (v.radius, v.norm, v.dim) != (base.radius, base.norm, base.dim):
            raise ValueError("variants must share the neighborhood")
    lam = max(max(v.lambda1, v.lambda2) for v in variants)
    finite = [v.gamma for v in variants if not v.gamma_is_inf]
    dot_rates = (max(finite),) if finite else ()
    return build_events(seed, base, lattice, horizon,
                        arrow_rate=lam, dot_rates=dot_rates)


def couple(seed: int, variants: list[Params], init_kind: str,
           sample_times, lattice: Lattice,
           snapshot_times=None) -> CoupledRun:
    """Run every variant over one shared representation and verdict
    domination for each comparable ordered pair at each sample time."""
    sample_times = np.asarray(sample_times, dtype=np.float64)
    horizon = float(sample_times[-1])
    rep = shared_representation(seed, variants, lattice, horizon)
    config0 = make_initial(init_kind, seed, lattice)
    snaps = tuple(sample_times if snapshot_times is None else snapshot_times)

    trajs = []
    for v in variants:
        view = VariantView.for_params(v, rep)
        trajs.append(run(config0.copy(), rep, sample_times,
                         snapshot_times=snaps, variant=view))

    verdicts = []
    for i in range(len(variants)):
        for j in range(len(variants)):
            if i >= j:
                continue
            cmp = comparable(variants[i], variants[j])
            if cmp is None:
                continue
            name, bluer = cmp
            bi, ri = (i, j) if bluer == 0 else (j, i)
            holds = np.zeros(len(snaps), dtype=bool)
            first = None
            for k, ts in enumerate(snaps):
                a = trajs[bi].snapshots[float(ts)]
                b = trajs[ri].snapshots[float(ts)]
                holds[k] = check_domination(a, b)
                if not holds[k] and first is None:
                    bad = np.nonzero(((a == 2) & (b != 2))
                                     | ((b == 1) & (a != 1)))[0]
                    first = (float(ts), int(bad[0]))
            verdicts.append(PairVerdict(pair=(bi, ri), param=name,
                                        holds=holds, first_violation=first))
    return CoupledRun(seed=seed, variants=list(variants),
                      sample_times=sample_times, trajectories=trajs,
                      verdicts=verdicts)


def paired_fold_check(seed: int, bluer: Params, redder: Params,
                      init_kind: str, lattice: Lattice, horizon: float):
    """Event-time domination check (test builds): fold both variants
    event by event and verify containment after every single event.

    Returns ``(ok, first_violation)``.
    """
    rep = shared_representation(seed, [bluer, redder], lattice, horizon)
    va = VariantView.for_params(bluer, rep)
    vb = VariantView.for_params(redder, rep)
    config0 = make_initial(init_kind, seed, lattice)
    a = config0.copy()
    b = config0.copy()
    t = rep.table
    from .forward import reference_fold
    for i in range(len(t)):
        one = t.slice(i, i + 1)
        a, _ = reference_fold(a, one, va, [])
        b, _ = reference_fold(b, one, vb, [])
        if not check_domination(a, b):
            return False, (float(t.time[i]), i)
    return True, None


# ---------------------------------------------------------------------
# layered thaw-rate sweep (large-scale, exact nesting without coins)
# ---------------------------------------------------------------------

def coupled_density_sweep(base: Params, gammas, lattice: Lattice,
                          horizon: float, replicas: int, init_kind: str,
                          base_seed: int = 0, sample_times=None,
                          max_material_rate: float = 20.0):
    """Mean per-state densities at the horizon for every thaw rate,
    all rates riding identical arrows, crosses and nested dot sets.

    Dot layers materialize the increments of the sorted rates up to
    ``max_material_rate``; anything above becomes a lazy per-episode
    clock on the top variant (valid because only that variant consumes
    it).  Returns ``(gammas, densities[replica, variant, 4])``.
    """
    gammas = sorted(gammas)
    if len(gammas) < 1 or gammas[0] <= 0:
        raise ValueError("need positive thaw rates")
    incs = np.diff(np.r_[0.0, gammas])
    material = [g for g in gammas if g <= max_material_rate]
    if not material:
        raise ValueError("at least the smallest rate must be materialized")
    n_material = len(material)
    if n_material < len(gammas) - 1:
        raise ValueError("only the single top rate may exceed "
                         f"max_material_rate={max_material_rate}")
    dot_rates = tuple(incs[:n_material])
    clock_variant = -1
    clock_rate = 0.0
    if n_material < len(gammas):
        clock_variant = len(gammas) - 1
        clock_rate = gammas[-1] - material[-1]

    K = len(gammas)
    layer_counts = np.arange(1, K + 1, dtype=np.int64)
    layer_counts = np.minimum(layer_counts, n_material)
    lam = max(base.lambda1, base.lambda2)
    blue_thrs = np.full(K, blue_threshold(base.lambda1, lam))
    red_thrs = np.full(K, red_threshold(base.lambda2, lam))
    gamma_infs = np.zeros(K, dtype=bool)
    samples = np.asarray([horizon] if sample_times is None else sample_times,
                         dtype=np.float64)

    out = np.zeros((replicas, K, 4), dtype=np.float64)
    for r in range(replicas):
        seed = base_seed + r
        rep = build_events(seed, base, lattice, horizon,
                           arrow_rate=lam, dot_rates=())
        dot_flat, dot_bounds = dot_index(seed, lattice.nsites, dot_rates,
                                         horizon)
        config0 = make_initial(init_kind, seed, lattice)
        states = np.tile(config0, (K, 1)).astype(np.uint8)
        counts = np.zeros((K, len(samples), 4), dtype=np.int64)
        t = rep.table
        engine.fold_table_multi(
            t.time, t.kind, t.site, t.target, t.coin,
            dot_flat, dot_bounds, len(dot_rates),
            states, blue_thrs, red_thrs, layer_counts,
            gamma_infs, clock_variant, clock_rate, np.uint64(seed),
            samples, counts, horizon)
        out[r] = counts[:, -1, :] / lattice.nsites
    return np.asarray(gammas, dtype=float), out


def dot_index(seed: int, nsites: int, dot_rates, horizon: float):
    """Per-(layer, site) sorted thaw-mark times as one flat array plus
    slice bounds; streams are keyed exactly like the event builder's
    dot layers, so the two constructions realize the same law."""
    from . import rng as _rng
    flats = []
    counts = np.zeros(len(dot_rates) * nsites, dtype=np.int64)
    for lay, rate in enumerate(dot_rates):
        keys = _rng.stream_keys(seed, np.arange(nsites, dtype=np.int64),
                                _rng.DOT_TIMES, lay)
        for stream_idx, times in _rng.poisson_times_grid(keys, rate, horizon):
            flats.append(times)
            counts[lay * nsites:(lay + 1) * nsites] += np.bincount(
                stream_idx, minlength=nsites)
    flat = np.concatenate(flats) if flats else np.empty(0)
    bounds = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    return flat, bounds
