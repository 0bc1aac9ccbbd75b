"""Closed numeric intervals used for predicates, node ranges, and answers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional


@dataclass(frozen=True)
class ValueRange:
    """Closed interval [lb, ub]; both endpoints belong to the range."""

    lb: float
    ub: float

    def __post_init__(self) -> None:
        if not (self.lb <= self.ub):
            raise ValueError(f"invalid range: lb={self.lb} > ub={self.ub}")

    @property
    def width(self) -> float:
        return self.ub - self.lb

    def contains(self, x: float) -> bool:
        return self.lb <= x <= self.ub

    def overlaps(self, other: "ValueRange") -> bool:
        return self.lb <= other.ub and other.lb <= self.ub

    def intersect(self, other: "ValueRange") -> Optional["ValueRange"]:
        lo = max(self.lb, other.lb)
        hi = min(self.ub, other.ub)
        if lo > hi:
            return None
        return ValueRange(lo, hi)


def union_ranges(ranges: Iterable[ValueRange]) -> List[ValueRange]:
    """Collapse a set of closed ranges into sorted, pairwise-disjoint ones.

    Touching ranges (ub of one equals lb of the next) merge into a single
    range; point membership is preserved exactly.
    """
    items = sorted(ranges, key=lambda r: (r.lb, r.ub))
    if not items:
        return []
    merged: List[ValueRange] = []
    cur_lb, cur_ub = items[0].lb, items[0].ub
    for r in items[1:]:
        if r.lb <= cur_ub:
            if r.ub > cur_ub:
                cur_ub = r.ub
        else:
            merged.append(ValueRange(cur_lb, cur_ub))
            cur_lb, cur_ub = r.lb, r.ub
    merged.append(ValueRange(cur_lb, cur_ub))
    return merged
