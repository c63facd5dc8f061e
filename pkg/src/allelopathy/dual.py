"""Dual process: ancestor hierarchy, distinguished path, lower trees,
and color determination of a space-time point from the realized events.

Conventions (fixed here; the hierarchy order is a documented choice):

* A dual-tree node is a maximal cross-free vertical segment ``(floor,
  top]`` of one site's timeline, entered from above (the root enters at
  the query time, every other node through the arrow it feeds).
* Children of a node are the arrows pointing into its site during its
  segment, and the hierarchy is the depth-first order that visits a
  node's time-0 landing first and then its children by increasing real
  arrow time (equivalently, latest dual birth first).  The first
  member is the distinguished particle.
* The distinguished particle's walk moves down the current timeline,
  and at a death mark bounces across the earliest arrow above it; the
  arrows crossed this way are the recorded hops.  The walk dies when a
  death mark has no arrow above it within the current segment.
* Free-versus-frozen questions (forbidden-arrow targets, the state of
  the root when no ancestor paints it) are answered from a forward
  replay of the same events; everything else is derived from the dual
  structure alone.

Events at exactly the query time t belong to the forward state but not
to the dual tree; randomized times make this a measure-zero convention.
The color procedure is defined for the blue-dominant ordering
(lambda1 >= lambda2), matching the construction it implements.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .forward import ForwardStateIndex, VariantView, run
from .graphical import ARROW, CROSS, GraphicalRep, LABEL_BLUE, LABEL_BOTH, \
    LABEL_RED, blue_threshold, red_threshold
from .lattice import SiteState

MAX_DFS_NODES = 2_000_000


# ---------------------------------------------------------------------
# low-level helpers on the representation
# ---------------------------------------------------------------------

def _floor_cross(rep: GraphicalRep, site: int, top: float):
    """Latest cross strictly below ``top`` on ``site`` (None if none)."""
    cs = rep.crosses_at(site)
    k = np.searchsorted(cs, top, side="left")
    return float(cs[k - 1]) if k > 0 else None


def _arrows_into_window(rep: GraphicalRep, site: int, lo: float, hi: float):
    """(times, sources, coins) of arrows into ``site`` with lo < t < hi."""
    times, sources, coins = rep.arrows_into(site)
    i0 = np.searchsorted(times, lo, side="right")
    i1 = np.searchsorted(times, hi, side="left")
    return times[i0:i1], sources[i0:i1], coins[i0:i1]


def _require_blue_dominant(rep: GraphicalRep):
    p = rep.params
    if p is None:
        raise ValueError("representation carries no params")
    if p.lambda1 < p.lambda2:
        raise ValueError("the ancestor-hierarchy color procedure is defined "
                         "for lambda1 >= lambda2")
    return p


def ensure_states(rep: GraphicalRep, config0, states=None):
    """Forward replay used for free/frozen bookkeeping."""
    if states is not None:
        return states
    _, idx = run(np.asarray(config0, dtype=np.uint8), rep, [rep.horizon],
                 record_transitions=True)
    return idx


# ---------------------------------------------------------------------
# distinguished particle walk
# ---------------------------------------------------------------------

@dataclass
class ArrowHop:
    """One arrow crossed by the distinguished particle."""

    site: int          # start site of the arrow (where the walk arrives)
    from_site: int     # target site (where the walk bounced)
    real_time: float
    dual_time: float
    label: str
    start_frozen: bool  # start site frozen at the arrow moment


@dataclass
class DistinguishedPath:
    root_site: int
    root_time: float
    hops: list[ArrowHop]
    cross_dual: list[float | None]  # per hop: dual time of first death
    #   mark under the hop's start point (None = none before time 0)
    died_at: float | None           # dual time the walk died, or None
    landing_site: int | None        # site reached at time 0, if it landed

    @property
    def visit_count(self) -> int:
        """Number of hops starting at a frozen site."""
        return sum(1 for h in self.hops if h.start_frozen)

    def visit_profile(self, dual_time: float) -> int:
        """Frozen-start hops crossed up to the given dual time
        (non-decreasing in dual_time along one realization)."""
        return sum(1 for h in self.hops
                   if h.start_frozen and h.dual_time <= dual_time)


def distinguished_path(rep: GraphicalRep, x: int, t: float,
                       states: ForwardStateIndex) -> DistinguishedPath:
    """Follow the first-ancestor walk from (x, t) down to time 0.

    ``states`` must come from a forward run on the same representation;
    it supplies the frozen test for each hop's start site.
    """
    p = rep.params
    if t > rep.horizon + 1e-12:
        raise ValueError("t exceeds the horizon")
    site, top = x, float(t)
    hops: list[ArrowHop] = []
    cross_dual: list[float | None] = []
    died_at = None
    landing = None
    first = True
    while True:
        fl = _floor_cross(rep, site, top)
        if not first:
            cross_dual.append(None if fl is None else t - fl)
        first = False
        if fl is None:
            landing = site
            break
        times, sources, coins = _arrows_into_window(rep, site, fl, top)
        if len(times) == 0:
            died_at = t - fl
            break
        tau, src, coin = float(times[0]), int(sources[0]), float(coins[0])
        blue_ok = coin >= blue_threshold(p.lambda1, rep.build_rate)
        red_ok = coin >= red_threshold(p.lambda2, rep.build_rate)
        label = LABEL_BOTH if (blue_ok and red_ok) \
            else (LABEL_BLUE if blue_ok else LABEL_RED)
        hops.append(ArrowHop(
            site=src, from_site=site, real_time=tau, dual_time=t - tau,
            label=label,
            start_frozen=states.state(src, tau, side="pre") == SiteState.FROZEN))
        site, top = src, tau
    return DistinguishedPath(root_site=x, root_time=t, hops=hops,
                             cross_dual=cross_dual, died_at=died_at,
                             landing_site=landing)


# ---------------------------------------------------------------------
# lower trees
# ---------------------------------------------------------------------

@dataclass
class LowerTree:
    hop_index: int
    root_site: int
    root_dual: float       # dual time of the first death mark under the hop
    survives: bool         # dual tree nonempty at the dual horizon
    dot_free: bool         # no thaw mark between the hop and its death mark
    favorable: bool

    def __post_init__(self):
        assert self.favorable == (self.survives and self.dot_free)


def dual_set_survives(rep: GraphicalRep, site: int, real_start: float,
                      real_end: float = 0.0) -> bool:
    """Set-valued dual of the contact skeleton from (site, real_start)
    run backwards to real_end: death marks kill, arrows spawn sources."""
    active = {int(site)}
    t = rep.table
    lo = np.searchsorted(t.time, real_end, side="left")
    hi = np.searchsorted(t.time, real_start, side="left")
    for i in range(hi - 1, lo - 1, -1):
        k = t.kind[i]
        if k == CROSS:
            active.discard(int(t.site[i]))
            if not active:
                return False
        elif k == ARROW and int(t.target[i]) in active:
            active.add(int(t.site[i]))
    return True


def lower_trees(rep: GraphicalRep, path: DistinguishedPath,
                dual_horizon: float | None = None) -> list[LowerTree]:
    """Lower tree per hop: rooted at the first death mark under the
    hop's start point, grown further back in dual time.

    Hops whose death mark lies beyond the dual horizon (or does not
    exist before time 0) yield no tree.  Survival uses the finite proxy
    "alive at the dual horizon"; default horizon is the root time.
    """
    H = path.root_time if dual_horizon is None else dual_horizon
    t_root = path.root_time
    out = []
    for n, hop in enumerate(path.hops):
        sigma = path.cross_dual[n] if n < len(path.cross_dual) else None
        if sigma is None or sigma > H:
            continue
        real_root = t_root - sigma
        survives = dual_set_survives(rep, hop.site, real_root, t_root - H)
        dots = rep.dots_at(hop.site)
        i0 = np.searchsorted(dots, real_root, side="right")
        i1 = np.searchsorted(dots, hop.real_time, side="left")
        dot_free = (i1 - i0) == 0
        out.append(LowerTree(hop_index=n, root_site=hop.site,
                             root_dual=sigma, survives=survives,
                             dot_free=dot_free,
                             favorable=survives and dot_free))
    return out


def favorability_rate_check(lam: float, gamma: float, samples: int,
                            seed: int = 0) -> dict:
    """Empirical P(death-wait <= thaw-wait) for Exp(1) vs Exp(gamma).

    Reported next to the closed forms it could be compared to: the
    rate-1 form 1/(1+gamma), the rate-lam form lam/(lam+gamma), and the
    printed expression lam/(gamma*(lam+gamma)) which exceeds 1 for
    small gamma and is reported for reference only, never asserted.
    """
    if samples < 1000:
        raise ValueError("need at least 1e3 samples")
    from . import rng
    key_a = rng.stream_key(seed, 0, rng.SCRATCH, 0)
    key_b = rng.stream_key(seed, 0, rng.SCRATCH, 1)
    ua = rng.uniforms(key_a, 0, samples)
    ub = rng.uniforms(key_b, 0, samples)
    cross_wait = -np.log1p(-ua)           # Exp(1)
    dot_wait = -np.log1p(-ub) / gamma     # Exp(gamma)
    emp = float(np.mean(cross_wait <= dot_wait))
    return {
        "empirical": emp,
        "closed_form_unit_rate": 1.0 / (1.0 + gamma),
        "closed_form_lambda": lam / (lam + gamma),
        "printed_expression": lam / (gamma * (lam + gamma)),
        "samples": samples,
    }


# ---------------------------------------------------------------------
# ancestor hierarchy and color determination
# ---------------------------------------------------------------------

def dual_ancestors(rep: GraphicalRep, x: int, t: float, s: float) -> list[int]:
    """Ordered ancestor sites at dual time ``s`` (distinct, first =
    distinguished particle's position)."""
    if not 0 <= s <= t <= rep.horizon + 1e-12:
        raise ValueError("need 0 <= s <= t <= horizon")
    level = t - s
    out: list[int] = []
    seen = set()
    budget = MAX_DFS_NODES
    # iterative preorder: (site, top, floor)
    stack = [(x, float(t), _floor_cross(rep, x, float(t)))]
    frames = []  # (children arrays, next index)
    site, top, fl = stack[0]
    if (fl is None or fl < level) and level <= top:
        out.append(site)
        seen.add(site)
    times, sources, _ = _arrows_into_window(rep, site, fl if fl else 0.0, top)
    frames.append([times, sources, 0])
    while frames:
        budget -= 1
        if budget <= 0:
            raise RuntimeError("dual tree too large")
        times, sources, k = frames[-1]
        while k < len(times) and times[k] < level:
            k += 1          # subtree lives entirely below the level
        frames[-1][2] = k + 1
        if k >= len(times):
            frames.pop()
            continue
        site, top = int(sources[k]), float(times[k])
        fl = _floor_cross(rep, site, top)
        if (fl is None or fl < level) and level <= top and site not in seen:
            out.append(site)
            seen.add(site)
        ct, cs, _ = _arrows_into_window(rep, site, fl if fl else 0.0, top)
        frames.append([ct, cs, 0])
    return out


@dataclass
class _Frame:
    site: int
    top: float
    floor: float | None
    times: np.ndarray
    sources: np.ndarray
    coins: np.ndarray
    next_child: int
    entry_red_ok: bool   # entry arrow usable by red (label + target thaw state)
    visited: bool = False


def determine_color(rep: GraphicalRep, config0, x: int, t: float,
                    states: ForwardStateIndex | None = None) -> int:
    """Color of (x, t) from the ancestor hierarchy.

    Walks the hierarchy in order: a member landing on blue paints blue;
    one landing on red paints red unless its path to the root crosses
    an arrow forbidden for red (blue-only label, or target frozen at
    the arrow moment per forward replay), in which case the whole
    subtree hanging below the first such arrow is discarded; members
    landing on free or frozen sites pass.  If no member paints, the
    point is empty and its free/frozen state is read from the replay.
    """
    p = _require_blue_dominant(rep)
    if not 0 <= t <= rep.horizon + 1e-12:
        raise ValueError("t must lie within [0, horizon]")
    config0 = np.asarray(config0, dtype=np.uint8)
    states = ensure_states(rep, config0, states)
    red_thr = red_threshold(p.lambda2, rep.build_rate)

    def make_frame(site, top, red_ok):
        fl = _floor_cross(rep, site, top)
        times, sources, coins = _arrows_into_window(
            rep, site, fl if fl is not None else 0.0, top)
        return _Frame(site=site, top=top, floor=fl, times=times,
                      sources=sources, coins=coins, next_child=0,
                      entry_red_ok=red_ok)

    stack = [make_frame(x, float(t), True)]
    budget = MAX_DFS_NODES
    while stack:
        budget -= 1
        if budget <= 0:
            raise RuntimeError("dual tree too large for color determination")
        fr = stack[-1]
        if not fr.visited:
            fr.visited = True
            if fr.floor is None:              # lands at time 0
                s0 = int(config0[fr.site])
                if s0 == SiteState.BLUE:
                    return int(SiteState.BLUE)
                if s0 == SiteState.RED:
                    forbidden = None
                    for idx in range(len(stack) - 1, 0, -1):
                        if not stack[idx].entry_red_ok:
                            forbidden = idx
                            break
                    if forbidden is None:
                        return int(SiteState.RED)
                    del stack[forbidden:]     # discard the hanging subtree
                    continue
                # free or frozen landing: pass to the next member
        if fr.next_child >= len(fr.times):
            stack.pop()
            continue
        k = fr.next_child
        fr.next_child += 1
        tau = float(fr.times[k])
        src = int(fr.sources[k])
        coin = float(fr.coins[k])
        red_ok = (coin >= red_thr) and \
            (states.state(fr.site, tau, side="pre") != SiteState.FROZEN)
        stack.append(make_frame(src, tau, red_ok))

    final = states.state(x, t, side="post")
    if final not in (int(SiteState.FREE), int(SiteState.FROZEN)):
        raise RuntimeError(
            "hierarchy exhausted but the forward state is occupied; "
            "the ordering convention has been violated")
    return int(final)


# ---------------------------------------------------------------------
# materialized tree (export / inspection)
# ---------------------------------------------------------------------

@dataclass
class DualTree:
    root_site: int
    root_time: float
    sites: list[int]
    entry_dual: list[float]   # dual birth time of each node
    parents: list[int]        # hierarchy-order parent index (-1 for root)

    def export_lines(self) -> list[str]:
        """Line format: ``node <site> <dual-birth> <parent-index>``."""
        return ["node %d %.17g %d" % (s, d, p)
                for s, d, p in zip(self.sites, self.entry_dual, self.parents)]

    @staticmethod
    def parse_lines(lines) -> "DualTree":
        sites, duals, parents = [], [], []
        for ln in lines:
            parts = ln.split()
            if not parts or parts[0] != "node":
                continue
            sites.append(int(parts[1]))
            duals.append(float(parts[2]))
            parents.append(int(parts[3]))
        return DualTree(root_site=sites[0] if sites else -1, root_time=0.0,
                        sites=sites, entry_dual=duals, parents=parents)


def build_dual_tree(rep: GraphicalRep, x: int, t: float,
                    max_nodes: int = 200_000) -> DualTree:
    """Materialize the unfolded dual tree in hierarchy (DFS) order."""
    sites = [x]
    duals = [0.0]
    parents = [-1]
    fl = _floor_cross(rep, x, float(t))
    times, sources, _ = _arrows_into_window(rep, x,
                                            fl if fl is not None else 0.0, t)
    stack = [[0, times, sources, 0]]
    while stack:
        node_idx, times, sources, k = stack[-1]
        if k >= len(times):
            stack.pop()
            continue
        stack[-1][3] += 1
        tau, src = float(times[k]), int(sources[k])
        sites.append(src)
        duals.append(t - tau)
        parents.append(node_idx)
        if len(sites) > max_nodes:
            raise RuntimeError("dual tree exceeds max_nodes")
        cfl = _floor_cross(rep, src, tau)
        ct, cs, _ = _arrows_into_window(rep, src,
                                        cfl if cfl is not None else 0.0, tau)
        stack.append([len(sites) - 1, ct, cs, 0])
    return DualTree(root_site=x, root_time=t, sites=sites,
                    entry_dual=duals, parents=parents)
