"""Harris graphical representation: keyed Poisson event streams.

Per site the representation carries, over a finite horizon:

* arrow streams, one per neighborhood offset, at rate ``Lambda/card N``
  where ``Lambda`` is the build rate (``max(lambda1, lambda2)`` for a
  single run, the max across variants for a coupled build).  Each arrow
  carries an independent coin u in [0,1).
* a cross stream at rate 1 (deaths),
* dot streams (thaws), one per layer; a single run uses one layer at
  rate gamma.  Dots carry coins too so coupled runs can thin them.

Species usability of an arrow with coin u under rates (l1, l2) and
build rate L: blue may use it iff u >= 1 - l1/L, red iff u >= 1 - l2/L.
For a single run with L = max(l1, l2) this is exactly the classic
thinning: when l1 >= l2 every arrow is blue-usable and an arrow is
"blue-only" with probability (l1 - l2)/l1; symmetrically for l1 < l2.
Nesting of the usable sets in each rate is what makes pathwise coupling
across parameter values work on one shared event set.

Everything is a deterministic function of ``(seed, domain, rates,
horizon)`` via :mod:`allelopathy.rng`; any single stream can be
regenerated in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import rng
from .lattice import Lattice, Neighborhood, Params

ARROW = 0
CROSS = 1
DOT = 2

_KIND_NAMES = {ARROW: "arrow", CROSS: "cross", DOT: "dot"}
_KIND_CODES = {v: k for k, v in _KIND_NAMES.items()}

LABEL_BOTH = "both-species"
LABEL_BLUE = "blue-only"
LABEL_RED = "red-only"

MAX_EVENTS = 200_000_000


def blue_threshold(lambda1: float, build_rate: float) -> float:
    """Coin threshold above which an arrow is usable by blue."""
    return 1.0 - lambda1 / build_rate


def red_threshold(lambda2: float, build_rate: float) -> float:
    """Coin threshold above which an arrow is usable by red."""
    return 1.0 - lambda2 / build_rate


def arrow_species_label(u: float, lambda1: float, lambda2: float) -> str:
    """Label of an arrow coin in a single run (build rate max(l1,l2)).

    Returns ``blue-only`` when only the blue species may cross,
    ``red-only`` when only red may, ``both-species`` otherwise.
    """
    lam = max(lambda1, lambda2)
    if lam <= 0:
        raise ValueError("max(lambda1, lambda2) must be positive")
    blue_ok = u >= blue_threshold(lambda1, lam)
    red_ok = u >= red_threshold(lambda2, lam)
    if blue_ok and red_ok:
        return LABEL_BOTH
    return LABEL_BLUE if blue_ok else LABEL_RED


@dataclass
class EventTable:
    """Struct-of-arrays event list, globally time-sorted.

    ``site`` is the event's anchor site (arrow source); ``target`` is
    the arrow target (-1 for crosses and dots); ``offset`` the arrow's
    neighborhood offset index (-1 otherwise); ``layer`` the dot layer
    (0 otherwise).  Ties (impossible almost surely) order by
    (time, site, kind, offset).
    """

    time: np.ndarray
    kind: np.ndarray
    site: np.ndarray
    target: np.ndarray
    offset: np.ndarray
    coin: np.ndarray
    layer: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    def sorted(self) -> "EventTable":
        order = np.argsort(self.time, kind="stable")
        t = self.time[order]
        if len(t) > 1 and np.any(np.diff(t) == 0.0):
            # ties never occur in continuous builds; hand-built tables
            # fall back to the full deterministic ordering
            order = np.lexsort((self.offset, self.kind, self.site, self.time))
        return EventTable(*(a[order] for a in self._arrays()))

    def _arrays(self):
        return (self.time, self.kind, self.site, self.target, self.offset,
                self.coin, self.layer)

    def slice(self, lo: int, hi: int) -> "EventTable":
        return EventTable(*(a[lo:hi] for a in self._arrays()))

    @staticmethod
    def concat(tables: list["EventTable"]) -> "EventTable":
        return EventTable(*(np.concatenate([t._arrays()[i] for t in tables])
                            for i in range(7)))

    @staticmethod
    def empty() -> "EventTable":
        return EventTable(np.empty(0), np.empty(0, np.uint8),
                          np.empty(0, np.int64), np.empty(0, np.int64),
                          np.empty(0, np.int16), np.empty(0),
                          np.empty(0, np.int8))


def _make_table(n: int) -> EventTable:
    return EventTable(
        time=np.empty(n, dtype=np.float64),
        kind=np.empty(n, dtype=np.uint8),
        site=np.empty(n, dtype=np.int64),
        target=np.full(n, -1, dtype=np.int64),
        offset=np.full(n, -1, dtype=np.int16),
        coin=np.zeros(n, dtype=np.float64),
        layer=np.zeros(n, dtype=np.int8),
    )


@dataclass
class GraphicalRep:
    """Immutable realized event set plus the geometry it was built on."""

    seed: int
    horizon: float
    lattice: Lattice
    neigh: Neighborhood
    build_rate: float           # arrow rate multiplier Lambda
    dot_rates: tuple[float, ...]  # per-layer thaw rates
    table: EventTable
    params: Params | None = None  # params passed to build_events, if any

    @property
    def nsites(self) -> int:
        return self.lattice.nsites

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        return self.lattice.neighbor_table(self.neigh)

    # -- per-site stream views (grouped indexes built lazily) ---------

    @cached_property
    def _by_site_kind(self):
        t = self.table
        out = {}
        for kind in (CROSS, DOT):
            sel = np.nonzero(t.kind == kind)[0]
            order = sel[np.lexsort((t.time[sel], t.site[sel]))]
            bounds = np.searchsorted(t.site[order], np.arange(self.nsites + 1))
            out[kind] = (order, bounds)
        return out

    @cached_property
    def _arrows_by_target(self):
        t = self.table
        sel = np.nonzero(t.kind == ARROW)[0]
        order = sel[np.lexsort((t.time[sel], t.target[sel]))]
        bounds = np.searchsorted(t.target[order], np.arange(self.nsites + 1))
        return order, bounds

    @cached_property
    def _arrows_by_source(self):
        t = self.table
        sel = np.nonzero(t.kind == ARROW)[0]
        order = sel[np.lexsort((t.time[sel], t.offset[sel], t.site[sel]))]
        key = t.site[order] * (self.neigh.card + 1) + t.offset[order]
        return order, key

    def crosses_at(self, site: int) -> np.ndarray:
        order, bounds = self._by_site_kind[CROSS]
        return self.table.time[order[bounds[site]:bounds[site + 1]]]

    def dots_at(self, site: int, with_coins: bool = False):
        order, bounds = self._by_site_kind[DOT]
        idx = order[bounds[site]:bounds[site + 1]]
        if with_coins:
            return self.table.time[idx], self.table.coin[idx]
        return self.table.time[idx]

    def arrows_into(self, site: int):
        """(times, sources, coins) of arrows pointing at ``site``."""
        order, bounds = self._arrows_by_target
        idx = order[bounds[site]:bounds[site + 1]]
        t = self.table
        return t.time[idx], t.site[idx], t.coin[idx]

    def arrows_from(self, site: int, offset_idx: int):
        """(times, coins) of the single arrow stream (site, offset)."""
        order, key = self._arrows_by_source
        want = site * (self.neigh.card + 1) + offset_idx
        lo = np.searchsorted(key, want)
        hi = np.searchsorted(key, want, side="right")
        idx = order[lo:hi]
        return self.table.time[idx], self.table.coin[idx]

    def events_in_order(self, t0: float = 0.0, t1: float | None = None
                        ) -> EventTable:
        """Time-sorted slice of the full table within [t0, t1]."""
        if t1 is None:
            t1 = self.horizon
        if t0 < 0 or t1 > self.horizon + 1e-12:
            raise ValueError("window must lie within [0, horizon]")
        lo = np.searchsorted(self.table.time, t0, side="left")
        hi = np.searchsorted(self.table.time, t1, side="right")
        return self.table.slice(lo, hi)

    # -- event-log export / import ------------------------------------

    def to_log_lines(self) -> list[str]:
        """Newline records ``time kind site [target u]``, 17 digits."""
        t = self.table
        lines = []
        for i in range(len(t)):
            k = int(t.kind[i])
            if k == ARROW:
                lines.append("%.17g arrow %d %d %.17g"
                             % (t.time[i], t.site[i], t.target[i], t.coin[i]))
            elif k == CROSS:
                lines.append("%.17g cross %d" % (t.time[i], t.site[i]))
            else:
                lines.append("%.17g dot %d %.17g"
                             % (t.time[i], t.site[i], t.coin[i]))
        return lines

    @staticmethod
    def from_log_lines(lines, seed: int, horizon: float, lattice: Lattice,
                       neigh: Neighborhood, build_rate: float,
                       dot_rates: tuple[float, ...] = ()) -> "GraphicalRep":
        offsets = neigh.offset_array()
        sides = np.array(lattice.sides, dtype=np.int64)
        rows = [ln.split() for ln in lines if ln.strip()]
        tab = _make_table(len(rows))
        for i, parts in enumerate(rows):
            tab.time[i] = float(parts[0])
            kind = _KIND_CODES[parts[1]]
            tab.kind[i] = kind
            tab.site[i] = int(parts[2])
            if kind == ARROW:
                tab.target[i] = int(parts[3])
                tab.coin[i] = float(parts[4])
                src = np.array(lattice.coord(int(parts[2])))
                tgt = np.array(lattice.coord(int(parts[3])))
                diff = (tgt - src) % sides
                match = np.nonzero((offsets % sides == diff).all(axis=1))[0]
                tab.offset[i] = match[0] if len(match) else -1
            elif kind == DOT:
                tab.coin[i] = float(parts[3]) if len(parts) > 3 else 0.0
        return GraphicalRep(seed=seed, horizon=horizon, lattice=lattice,
                            neigh=neigh, build_rate=build_rate,
                            dot_rates=dot_rates, table=tab.sorted())


def build_events(seed: int, p: Params, lattice: Lattice, horizon: float,
                 arrow_rate: float | None = None,
                 dot_rates: tuple[float, ...] | None = None) -> GraphicalRep:
    """Generate the full event set for one seed.

    ``arrow_rate`` overrides the build rate (coupled runs pass the max
    across variants); ``dot_rates`` overrides the dot layers (a coupled
    gamma build passes the max finite gamma, a layered sweep passes the
    increments).  Defaults reproduce the single-run construction.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    lam = max(p.lambda1, p.lambda2) if arrow_rate is None else arrow_rate
    if lam <= 0:
        raise ValueError("need max(lambda1, lambda2) > 0")
    if dot_rates is None:
        dot_rates = () if p.gamma_is_inf else (p.gamma,)
    neigh = p.neighborhood
    nsites = lattice.nsites
    card = neigh.card

    expected = nsites * horizon * (lam + 1.0 + sum(dot_rates))
    if expected > MAX_EVENTS:
        raise ValueError(
            f"~{expected:.2e} events exceeds the in-memory limit; "
            "use the streaming engine for this parameter range")

    neighbor_tab = lattice.neighbor_table(neigh)
    tables = []

    # arrows: one stream per (site, offset), coins from a parallel stream
    per_offset = lam / card
    sites_rep = np.repeat(np.arange(nsites, dtype=np.int64), card)
    offs_rep = np.tile(np.arange(card, dtype=np.int64), nsites)
    keys = rng.stream_keys(seed, sites_rep, rng.ARROW_TIMES, offs_rep)
    coin_keys = rng.stream_keys(seed, sites_rep, rng.ARROW_COINS, offs_rep)
    for stream_idx, times in rng.poisson_times_grid(keys, per_offset, horizon):
        tab = _make_table(len(times))
        tab.time[:] = times
        tab.kind[:] = ARROW
        tab.site[:] = sites_rep[stream_idx]
        tab.offset[:] = offs_rep[stream_idx]
        tab.target[:] = neighbor_tab[tab.site, tab.offset]
        # per-event coin: same index the event holds within its stream
        within = _within_stream_index(stream_idx)
        z = rng.mix64_array(coin_keys[stream_idx]
                            + (within + np.uint64(1)) * np.uint64(rng.GOLDEN))
        tab.coin[:] = (z >> np.uint64(11)) * (1.0 / (1 << 53))
        tables.append(tab)

    # crosses at rate 1
    keys = rng.stream_keys(seed, np.arange(nsites, dtype=np.int64),
                           rng.CROSS_TIMES)
    for stream_idx, times in rng.poisson_times_grid(keys, 1.0, horizon):
        tab = _make_table(len(times))
        tab.time[:] = times
        tab.kind[:] = CROSS
        tab.site[:] = stream_idx
        tables.append(tab)

    # dot layers
    for layer, rate in enumerate(dot_rates):
        if rate <= 0:
            continue
        keys = rng.stream_keys(seed, np.arange(nsites, dtype=np.int64),
                               rng.DOT_TIMES, layer)
        ckeys = rng.stream_keys(seed, np.arange(nsites, dtype=np.int64),
                                rng.DOT_COINS, layer)
        for stream_idx, times in rng.poisson_times_grid(keys, rate, horizon):
            tab = _make_table(len(times))
            tab.time[:] = times
            tab.kind[:] = DOT
            tab.site[:] = stream_idx
            tab.layer[:] = layer
            within = _within_stream_index(stream_idx)
            z = rng.mix64_array(ckeys[stream_idx]
                                + (within + np.uint64(1))
                                * np.uint64(rng.GOLDEN))
            tab.coin[:] = (z >> np.uint64(11)) * (1.0 / (1 << 53))
            tables.append(tab)

    table = EventTable.concat(tables).sorted() if tables else EventTable.empty()
    return GraphicalRep(seed=seed, horizon=horizon, lattice=lattice,
                        neigh=neigh, build_rate=lam, dot_rates=tuple(dot_rates),
                        table=table, params=p)


def _within_stream_index(stream_idx: np.ndarray) -> np.ndarray:
    """Position of each element within its (already grouped) stream run."""
    n = len(stream_idx)
    if n == 0:
        return np.empty(0, dtype=np.uint64)
    starts = np.r_[0, np.nonzero(np.diff(stream_idx))[0] + 1]
    within = np.arange(n, dtype=np.int64)
    within -= np.repeat(starts, np.diff(np.r_[starts, n]))
    return within.astype(np.uint64)
