"""Association blocks: groups of RVs tied together by heavy pairwise potentials.

A high-weight potential over exactly two RVs with coefficients of equal
magnitude is satisfied on a half-plane ``y_a + y_b <= c``, ``y_a + y_b >= c``,
``y_a - y_b <= c`` or ``y_a - y_b >= c``.  Intersecting these per RV pair gives
sum and difference bounds; pairs whose bound interval is narrow are merged
into one block with a disjoint-set forest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from ..psl.grounding import GroundRuleSet

PLUS_RANGE = (0.0, 2.0)
MINUS_RANGE = (-1.0, 1.0)


@dataclass
class AssociationBounds:
    """``plus[(a, b)]`` bounds ``y_a + y_b``; ``minus[(a, b)]`` bounds ``y_a - y_b``.

    Keys always have ``a < b``.  ``associated`` holds the pairs that were
    merged into blocks; only those drive block proposals.
    """

    plus: dict = field(default_factory=dict)
    minus: dict = field(default_factory=dict)
    associated: set = field(default_factory=set)
    conflicts: int = 0

    def tighten(self, kind: str, a: int, b: int, lower: float | None = None, upper: float | None = None):
        if a == b:
            return
        if a > b:
            a, b = b, a
            if kind == "minus":
                lower, upper = (None if upper is None else -upper), (None if lower is None else -lower)
        table, (lo0, hi0) = (self.plus, PLUS_RANGE) if kind == "plus" else (self.minus, MINUS_RANGE)
        lo, hi = table.get((a, b), (lo0, hi0))
        if lower is not None:
            lo = max(lo, min(max(lower, lo0), hi0))
        if upper is not None:
            hi = min(hi, max(min(upper, hi0), lo0))
        table[(a, b)] = (lo, hi)

    def settle(self) -> None:
        """Collapse crossed intervals (conflicting heavy rules) to their midpoint."""
        for table in (self.plus, self.minus):
            for key, (lo, hi) in table.items():
                if lo > hi:
                    mid = 0.5 * (lo + hi)
                    table[key] = (mid, mid)
                    self.conflicts += 1

    def width(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        w = math.inf
        if key in self.plus:
            w = min(w, self.plus[key][1] - self.plus[key][0])
        if key in self.minus:
            w = min(w, self.minus[key][1] - self.minus[key][0])
        return w

    def range_given(self, j: int, k: int, y_k: float) -> tuple[float, float]:
        """Interval for ``y_j`` implied by the bounds on pair ``(j, k)`` given ``y_k``."""
        lo, hi = -math.inf, math.inf
        key = (min(j, k), max(j, k))
        if key in self.plus:
            p_lo, p_hi = self.plus[key]
            lo, hi = max(lo, p_lo - y_k), min(hi, p_hi - y_k)
        if key in self.minus:
            m_lo, m_hi = self.minus[key]
            if j < k:       # y_j - y_k in [m_lo, m_hi]
                lo, hi = max(lo, y_k + m_lo), min(hi, y_k + m_hi)
            else:           # y_k - y_j in [m_lo, m_hi]
                lo, hi = max(lo, y_k - m_hi), min(hi, y_k - m_lo)
        return lo, hi

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {}
        for a, b in sorted(self.associated):
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        return adj


@dataclass
class BlockPartition:
    blocks: list[np.ndarray]
    pair_edges: list[tuple[int, int]]
    bounds: AssociationBounds
    n_rv: int

    def block_of(self) -> np.ndarray:
        owner = np.empty(self.n_rv, dtype=np.int64)
        for i, members in enumerate(self.blocks):
            owner[members] = i
        return owner

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.blocks], dtype=np.int64)

    @classmethod
    def singletons(cls, n_rv: int) -> "BlockPartition":
        return cls([np.array([i]) for i in range(n_rv)], [], AssociationBounds(), n_rv)


def default_weight_threshold(rules: GroundRuleSet) -> float:
    """Twice the median weight over soft potentials with nonzero weight (0 if none)."""
    w = rules.pot_weight[rules.pot_weight > 0]
    if len(w) == 0:
        return 0.0
    return 2.0 * float(np.median(w))


def collect_bounds(rules: GroundRuleSet, weight_threshold: float) -> AssociationBounds:
    bounds = AssociationBounds()
    nterms = np.diff(rules.pot_ptr)
    heavy = np.flatnonzero((rules.pot_weight > weight_threshold) & (nterms == 2))
    for r in heavy:
        s = rules.pot_ptr[r]
        (a, b), (ca, cb) = rules.term_rv[s:s + 2], rules.term_coef[s:s + 2]
        scale = abs(ca)
        if scale == 0 or not math.isclose(abs(cb), scale, rel_tol=1e-12):
            continue
        # satisfied region: ca*y_a + cb*y_b + const <= 0
        rhs = -rules.pot_const[r] / scale
        a, b = int(a), int(b)
        if ca == cb:
            if ca > 0:
                bounds.tighten("plus", a, b, upper=rhs)
            else:
                bounds.tighten("plus", a, b, lower=-rhs)
        elif ca > 0:
            bounds.tighten("minus", a, b, upper=rhs)
        else:
            bounds.tighten("minus", a, b, lower=-rhs)
    # hard sum constraints act as infinitely heavy equalities when pairwise
    if math.inf > weight_threshold:
        for g in range(rules.n_constraints):
            members = rules.constraint(g)
            if len(members) == 2:
                a, b = int(members[0]), int(members[1])
                bounds.tighten("plus", a, b, lower=1.0, upper=1.0)
    bounds.settle()
    return bounds


def ablocks(rules: GroundRuleSet, weight_threshold: float | None = None,
            range_threshold: float = 0.1) -> BlockPartition:
    """Partition the RVs of ``rules`` into association blocks.

    ``weight_threshold=None`` uses :func:`default_weight_threshold`.  Blocks
    are sorted RV arrays ordered by their smallest member; RVs without a
    narrow association stay singletons.
    """
    if weight_threshold is None:
        weight_threshold = default_weight_threshold(rules)
    bounds = collect_bounds(rules, weight_threshold)
    forest = DisjointSet(range(rules.n_rv))
    pairs = sorted(set(bounds.plus) | set(bounds.minus))
    merged = []
    for a, b in pairs:
        if bounds.width(a, b) <= range_threshold:
            forest.merge(a, b)
            merged.append((a, b))
    bounds.associated = set(merged)
    blocks = sorted((np.array(sorted(s), dtype=np.int64) for s in forest.subsets()), key=lambda m: m[0])
    return BlockPartition(blocks, merged, bounds, rules.n_rv)
