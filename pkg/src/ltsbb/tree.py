"""Enumeration tree over all h-subsets of {0..n-1}.

A node fixes some observations in (``s1``) and some out (``s0``); its
children each add one new index to ``s1`` while excluding the candidates
assigned to earlier sibling positions, so the leaves enumerate every
h-subset exactly once.  The tree is never materialized: nodes are values
and children are generated on demand, optionally under a caller-supplied
permutation of the candidate observations (in-level ordering).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DESCEND = "descend"
PRUNE = "prune"


@dataclass(frozen=True)
class NodeState:
    """Search node: s1 fixed in (insertion order), s0 fixed out."""

    s1: tuple[int, ...] = ()
    s0: frozenset[int] = frozenset()

    @property
    def depth(self) -> int:
        return len(self.s1)

    def feasible(self, n: int, h: int) -> bool:
        if set(self.s1) & self.s0:
            return False
        return len(self.s1) <= h and n - len(self.s0) - len(self.s1) >= h - len(self.s1)


@dataclass(frozen=True)
class ChildOrder:
    """Permutation of a node's candidate children with per-child scores.

    ``permutation[i]`` is the position in the default (ascending index)
    candidate list of the candidate to place at child position i.
    """

    permutation: tuple[int, ...]
    scores: tuple[float, ...] = ()

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.permutation))):
            raise ValueError("permutation must be a bijection on the candidate set")

    @staticmethod
    def by_score(scores, descending: bool = True) -> "ChildOrder":
        """Order candidates by score, stable, ties keep candidate order."""
        n = len(scores)
        key = sorted(range(n), key=lambda i: (-scores[i] if descending else scores[i], i))
        return ChildOrder(tuple(key), tuple(float(s) for s in scores))


def candidates(node: NodeState, n: int, h: int) -> list[int]:
    """Observations eligible to occupy this node's child positions.

    These are the n - |s0| - h + 1 smallest free indices: assigning any
    later index to the last position would strand fewer than h - |s1| - 1
    free observations below it.
    """
    fixed = node.s0.union(node.s1)
    free = [i for i in range(n) if i not in fixed]
    width = n - len(node.s0) - h + 1
    return free[:width]


def children(node: NodeState, n: int, h: int, order: ChildOrder | None = None) -> list[NodeState]:
    """Child nodes under left-sibling exclusion.

    The l-th child adds one candidate to s1 and the l-1 earlier siblings'
    candidates to s0.  With ``order`` given, candidates are permuted before
    positions are assigned, so the leftmost (largest) subtree receives
    ``order.permutation[0]``.  Returns the empty list at leaves.
    """
    if node.depth >= h:
        return []
    cand = candidates(node, n, h)
    if order is not None:
        if len(order.permutation) != len(cand):
            raise ValueError("order length does not match candidate count")
        cand = [cand[p] for p in order.permutation]
    out = []
    for l, c in enumerate(cand):
        out.append(NodeState(node.s1 + (c,), node.s0.union(cand[:l])))
    return out


def leaves_below(node: NodeState, n: int, h: int, cap: int | None = None) -> int:
    """Number of h-subsets extending s1 while avoiding s0.

    Exact integer arithmetic (Python ints do not overflow); ``cap``
    saturates the count, which is all threshold comparisons need.
    """
    free = n - len(node.s0) - len(node.s1)
    want = h - len(node.s1)
    if want < 0 or free < want:
        return 0
    count = math.comb(free, want)
    if cap is not None and count > cap:
        return cap
    return count


@dataclass
class TraversalStats:
    nodes_visited: int = 0
    pruned_subtrees: int = 0
    leaves_reached: int = 0


def dfs(root: NodeState, visit, n: int, h: int) -> TraversalStats:
    """Depth-first traversal from ``root`` driven by a visit callback.

    ``visit(node)`` is called on every node reached and returns DESCEND,
    PRUNE, or a ChildOrder to apply when expanding.  Leaves are counted
    when reached; their callback return value is ignored.  Callbacks must
    not depend on traversal history for the statistics to be meaningful.
    """
    stats = TraversalStats()

    def go(node: NodeState) -> None:
        stats.nodes_visited += 1
        decision = visit(node)
        if node.depth >= h:
            stats.leaves_reached += 1
            return
        if decision is PRUNE:
            stats.pruned_subtrees += 1
            return
        order = decision if isinstance(decision, ChildOrder) else None
        for child in children(node, n, h, order):
            go(child)

    go(root)
    return stats
