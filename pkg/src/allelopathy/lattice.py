"""Lattice geometry, site states, neighborhoods and instantaneous rates.

States: 0 = free, 1 = blue (inhibitory), 2 = red (susceptible),
3 = frozen.  The lattice is a finite torus in arbitrary dimension;
configurations are flat ``uint8`` numpy arrays indexed in C order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

N_STATES = 4


class SiteState(IntEnum):
    FREE = 0
    BLUE = 1
    RED = 2
    FROZEN = 3


@dataclass(frozen=True)
class Neighborhood:
    """Set of nonzero integer offsets y with ||y|| <= r.

    Offsets are lexicographically sorted and closed under negation; the
    origin is excluded (a site is not its own neighbor).
    """

    radius: float
    norm: str
    dim: int
    offsets: tuple[tuple[int, ...], ...]

    @property
    def card(self) -> int:
        return len(self.offsets)

    def offset_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=np.int64)


def _norm(vec: tuple[int, ...], kind: str) -> float:
    if kind == "l1":
        return float(sum(abs(v) for v in vec))
    if kind == "l2":
        return math.sqrt(sum(v * v for v in vec))
    if kind == "linf":
        return float(max(abs(v) for v in vec))
    raise ValueError(f"unknown norm {kind!r} (expected l1, l2 or linf)")


def build_neighborhood(radius: float, norm: str = "l1", dim: int = 2,
                       include_origin: bool = False) -> Neighborhood:
    """Enumerate the interaction neighborhood for a given radius and norm.

    Parameters
    ----------
    radius : float
        Interaction range; must be >= 1 so the neighborhood is nonempty.
    norm : str
        One of ``l1``, ``l2``, ``linf``.
    dim : int
        Lattice dimension, >= 1.
    include_origin : bool
        Keep y = 0 as its own neighbor.  Off by default: self-birth is
        not part of the dynamics.
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    if radius < 1:
        raise ValueError("radius must be >= 1 (empty neighborhood)")
    norm = norm.lower()
    box = int(math.floor(radius))
    offsets = []
    for vec in itertools.product(range(-box, box + 1), repeat=dim):
        if vec == (0,) * dim and not include_origin:
            continue
        if _norm(vec, norm) <= radius + 1e-12:
            offsets.append(vec)
    offsets.sort()
    return Neighborhood(radius=radius, norm=norm, dim=dim,
                        offsets=tuple(offsets))


@dataclass(frozen=True)
class Lattice:
    """Finite torus: per-axis side lengths, periodic boundary."""

    sides: tuple[int, ...]

    def __post_init__(self):
        if not self.sides or any(s < 1 for s in self.sides):
            raise ValueError("side lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def nsites(self) -> int:
        return int(np.prod(self.sides))

    def index(self, coord: tuple[int, ...]) -> int:
        """Flat index of a (wrapped) coordinate, C order."""
        idx = 0
        for c, s in zip(coord, self.sides):
            idx = idx * s + (c % s)
        return idx

    def coord(self, index: int) -> tuple[int, ...]:
        out = []
        for s in reversed(self.sides):
            out.append(index % s)
            index //= s
        return tuple(reversed(out))

    def center(self) -> tuple[int, ...]:
        return tuple(s // 2 for s in self.sides)

    def neighbor_table(self, neigh: Neighborhood) -> np.ndarray:
        """(nsites, card) int32 table of wrapped neighbor indices."""
        if neigh.dim != self.dim:
            raise ValueError("neighborhood dimension does not match lattice")
        return _neighbor_table(self.sides, neigh.offsets)


def _neighbor_table(sides: tuple[int, ...], offsets) -> np.ndarray:
    sides_arr = np.array(sides, dtype=np.int64)
    nsites = int(np.prod(sides_arr))
    coords = np.stack(np.unravel_index(np.arange(nsites), sides), axis=1)
    table = np.empty((nsites, len(offsets)), dtype=np.int32)
    for j, off in enumerate(offsets):
        shifted = (coords + np.array(off, dtype=np.int64)) % sides_arr
        table[:, j] = np.ravel_multi_index(shifted.T, sides)
    return table


@dataclass(frozen=True)
class Params:
    """Model rates plus the neighborhood specification.

    lambda1 / lambda2 are the blue / red birth rates, gamma the thaw
    rate of frozen sites (``math.inf`` selects the instant-thaw variant,
    i.e. the plain two-species contact process).  Deaths have rate 1.
    """

    lambda1: float
    lambda2: float
    gamma: float
    radius: float = 1.0
    norm: str = "l1"
    dim: int = 2

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("birth rates must be nonnegative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive (math.inf allowed)")

    @cached_property
    def neighborhood(self) -> Neighborhood:
        return build_neighborhood(self.radius, self.norm, self.dim)

    @property
    def gamma_is_inf(self) -> bool:
        return math.isinf(self.gamma)

    def with_(self, **kw) -> "Params":
        d = dict(lambda1=self.lambda1, lambda2=self.lambda2, gamma=self.gamma,
                 radius=self.radius, norm=self.norm, dim=self.dim)
        d.update(kw)
        return Params(**d)


def densities(config: np.ndarray) -> np.ndarray:
    """Fraction of sites in each of the four states."""
    return np.bincount(config, minlength=N_STATES)[:N_STATES] / config.size


def state_counts(config: np.ndarray) -> np.ndarray:
    return np.bincount(config, minlength=N_STATES)[:N_STATES]


def fraction_occupied(config: np.ndarray, lattice: Lattice,
                      neigh: Neighborhood, site: int, state: int) -> float:
    """Fraction of the neighbors of ``site`` occupied by ``state``."""
    coord = lattice.coord(site)
    hits = 0
    for off in neigh.offsets:
        nb = lattice.index(tuple(c + o for c, o in zip(coord, off)))
        if config[nb] == state:
            hits += 1
    return hits / neigh.card


def transition_rate(config: np.ndarray, lattice: Lattice, neigh: Neighborhood,
                    site: int, target: int, p: Params) -> float:
    """Instantaneous rate of jumping to ``target`` at ``site``.

    Rate table: 0->1 and 3->1 at lambda1*f1, 0->2 at lambda2*f2,
    1->3 at 1, 3->0 at gamma, 2->0 at 1; every other pair has rate 0.
    """
    s = config[site]
    if s in (SiteState.FREE, SiteState.FROZEN) and target == SiteState.BLUE:
        return p.lambda1 * fraction_occupied(config, lattice, neigh, site,
                                             SiteState.BLUE)
    if s == SiteState.FREE and target == SiteState.RED:
        return p.lambda2 * fraction_occupied(config, lattice, neigh, site,
                                             SiteState.RED)
    if s == SiteState.BLUE and target == SiteState.FROZEN:
        return 1.0
    if s == SiteState.FROZEN and target == SiteState.FREE:
        return p.gamma
    if s == SiteState.RED and target == SiteState.FREE:
        return 1.0
    return 0.0
