"""1+1D Minkowski lattice with unit light speed.

Lightlike separation counts as causal (the closed cone J+). The strict
interior I+ is available through ``point_relation(..., chronological=True)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class CausalRelation(enum.Enum):
    STRICTLY_FUTURE = "StrictlyFuture"
    STRICTLY_PAST = "StrictlyPast"
    SPACELIKE = "Spacelike"
    MIXED = "Mixed"

    def reverse(self) -> "CausalRelation":
        return _REVERSE[self]

    @property
    def time_ordered(self) -> bool:
        return self in (CausalRelation.STRICTLY_FUTURE, CausalRelation.STRICTLY_PAST)


_REVERSE = {
    CausalRelation.STRICTLY_FUTURE: CausalRelation.STRICTLY_PAST,
    CausalRelation.STRICTLY_PAST: CausalRelation.STRICTLY_FUTURE,
    CausalRelation.SPACELIKE: CausalRelation.SPACELIKE,
    CausalRelation.MIXED: CausalRelation.MIXED,
}


@dataclass(frozen=True, order=True)
class LatticePoint:
    x: int
    t: int


@dataclass(frozen=True)
class Region:
    """Finite nonempty set of lattice points."""

    points: frozenset[LatticePoint]

    def __init__(self, points: Iterable[LatticePoint | Sequence[int]]):
        pts = frozenset(p if isinstance(p, LatticePoint) else LatticePoint(int(p[0]), int(p[1])) for p in points)
        if not pts:
            raise ValueError("region must contain at least one point")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_list(cls, pairs: Sequence[Sequence[int]]) -> "Region":
        """Build from the config literal: a list of ``[x, t]`` integer pairs."""
        for pair in pairs:
            if len(pair) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in pair):
                raise ValueError(f"region entries must be [x, t] integer pairs, got {pair!r}")
        return cls(pairs)

    @classmethod
    def row(cls, xs: Iterable[int], t: int) -> "Region":
        return cls(LatticePoint(int(x), int(t)) for x in xs)

    def to_list(self) -> list[list[int]]:
        return [[p.x, p.t] for p in sorted(self.points, key=lambda p: (p.t, p.x))]

    def union(self, other: "Region") -> "Region":
        return Region(self.points | other.points)

    def __or__(self, other: "Region") -> "Region":
        return self.union(other)

    def __le__(self, other: "Region") -> bool:
        return self.points <= other.points

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(sorted(self.points, key=lambda p: (p.t, p.x)))

    @property
    def xs(self) -> frozenset[int]:
        return frozenset(p.x for p in self.points)

    @property
    def times(self) -> frozenset[int]:
        return frozenset(p.t for p in self.points)

    def single_time(self) -> int | None:
        ts = self.times
        return next(iter(ts)) if len(ts) == 1 else None


def in_causal_future(p: LatticePoint, q: LatticePoint, chronological: bool = False) -> bool:
    """True iff p lies in J+(q), or in I+(q) when ``chronological``."""
    dt = p.t - q.t
    dx = abs(p.x - q.x)
    if dt <= 0:
        return False
    return dx < dt if chronological else dx <= dt


def point_relation(p: LatticePoint, q: LatticePoint, chronological: bool = False) -> CausalRelation:
    """Relation of p to q; equal points (and, with ``chronological``, lightlike pairs) are Mixed."""
    if in_causal_future(p, q, chronological):
        return CausalRelation.STRICTLY_FUTURE
    if in_causal_future(q, p, chronological):
        return CausalRelation.STRICTLY_PAST
    if abs(p.x - q.x) > abs(p.t - q.t):
        return CausalRelation.SPACELIKE
    return CausalRelation.MIXED


def region_relation(A: Region, B: Region, chronological: bool = False) -> CausalRelation:
    rels = {point_relation(p, q, chronological) for p in A.points for q in B.points}
    if len(rels) == 1:
        return rels.pop()
    return CausalRelation.MIXED


def lightcone_grow(sites: Iterable[int], dt: int, chain: Sequence[int] | range | int) -> frozenset[int]:
    """Expand a site set by ``dt`` in both directions, clipped to the chain.

    ``chain`` is either a site count ``n`` (sites ``0..n-1``) or an explicit
    collection of sites.
    """
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    allowed = set(range(chain)) if isinstance(chain, int) else set(chain)
    out = set()
    for s in sites:
        out.update(range(s - dt, s + dt + 1))
    return frozenset(out & allowed)


def identity_positions(n_sites: int) -> dict[int, int]:
    return {s: s for s in range(n_sites)}


def star_positions(n_env: int) -> dict[int, int]:
    """System at x=0, environment sites alternating at x=+1,-1,+2,-2,..."""
    pos = {0: 0}
    for k in range(1, n_env + 1):
        mag = (k + 1) // 2
        pos[k] = mag if k % 2 else -mag
    return pos


def region_for_sites(sites: Iterable[int], t: int, positions: Mapping[int, int] | None = None) -> Region:
    sites = list(sites)
    if not sites:
        raise ValueError("need at least one site")
    return Region.row((positions[s] if positions is not None else s for s in sites), t)


def sites_of_region(region: Region, positions: Mapping[int, int] | None = None) -> frozenset[int]:
    """Sites whose lattice position occurs in the region."""
    if positions is None:
        return region.xs
    inverse = {x: s for s, x in positions.items()}
    missing = [x for x in region.xs if x not in inverse]
    if missing:
        raise ValueError(f"region positions {sorted(missing)} carry no site")
    return frozenset(inverse[x] for x in region.xs)
