"""Smatch similarity between plan trees.

Each tree is decomposed into instance triples (node, level-1 type), attribute
triples (node, level, token) for non-NIL level-2/3 subtypes, and untyped
parent->child edge triples. The score is the maximum F1 over one-to-one node
mappings, searched by restarted hill-climbing, with an exhaustive
branch-and-bound oracle for small instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .plan import PlanTree
from .taxonomy import NIL

EXACT_GUARD_NODES = 8


@dataclass
class TripleSet:
    instances: list[tuple[int, str]]
    attributes: list[tuple[int, int, str]]
    edges: list[tuple[int, int]]

    @property
    def total(self) -> int:
        return len(self.instances) + len(self.attributes) + len(self.edges)


@dataclass
class SmatchResult:
    score: float
    precision: float
    recall: float
    mapping: dict[int, int]
    restarts_used: int = 0


def extract_triples(tree: PlanTree) -> TripleSet:
    """Decompose a tree into instance/attribute/edge triples (preorder node ids)."""
    instances, attributes, edges = [], [], []
    counter = [0]

    def visit(node, parent_id):
        nid = counter[0]
        counter[0] += 1
        instances.append((nid, node.triple.level1))
        if node.triple.level2 != NIL:
            attributes.append((nid, 2, node.triple.level2))
        if node.triple.level3 != NIL:
            attributes.append((nid, 3, node.triple.level3))
        if parent_id is not None:
            edges.append((parent_id, nid))
        for c in node.children:
            visit(c, nid)

    visit(tree.root, None)
    return TripleSet(instances, attributes, edges)


class _Matcher:
    """Precomputed per-node match gains for mappings from tree a into tree b."""

    def __init__(self, a: TripleSet, b: TripleSet):
        self.a = a
        self.b = b
        self.na = len(a.instances)
        self.nb = len(b.instances)
        # node_gain[i][j]: instance+attribute matches if a-node i maps to b-node j
        gain = np.zeros((self.na, self.nb), dtype=np.int64)
        b_l1 = [t for _, t in b.instances]
        b_attr = {}
        for nid, level, tok in b.attributes:
            b_attr.setdefault(nid, set()).add((level, tok))
        a_attr = {}
        for nid, level, tok in a.attributes:
            a_attr.setdefault(nid, set()).add((level, tok))
        for i, (_, l1) in enumerate(a.instances):
            ai = a_attr.get(i, set())
            for j in range(self.nb):
                g = int(l1 == b_l1[j])
                g += len(ai & b_attr.get(j, set()))
                gain[i, j] = g
        self.node_gain = gain
        self.b_edges = set(b.edges)
        # adjacency of a for incremental edge scoring
        self.a_out = {}
        self.a_in = {}
        for p, c in a.edges:
            self.a_out.setdefault(p, []).append(c)
            self.a_in.setdefault(c, []).append(p)

    def matched(self, mapping: list[int]) -> int:
        """Total matched triples for a full/partial mapping (-1 = unmapped)."""
        m = 0
        for i, j in enumerate(mapping):
            if j >= 0:
                m += self.node_gain[i, j]
        for p, c in self.a.edges:
            jp, jc = mapping[p], mapping[c]
            if jp >= 0 and jc >= 0 and (jp, jc) in self.b_edges:
                m += 1
        return m

    def result(self, mapping: list[int], restarts_used: int = 0) -> SmatchResult:
        m = self.matched(mapping)
        ta, tb = self.a.total, self.b.total
        p = m / ta if ta else 0.0
        r = m / tb if tb else 0.0
        f1 = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        mp = {i: j for i, j in enumerate(mapping) if j >= 0}
        return SmatchResult(score=f1, precision=p, recall=r, mapping=mp,
                            restarts_used=restarts_used)


def _greedy_typed_start(m: _Matcher) -> list[int]:
    """Anchor initialization: assign each a-node greedily to the best free b-node."""
    mapping = [-1] * m.na
    used = set()
    for i in range(m.na):
        best_j, best_g = -1, 0
        for j in range(m.nb):
            if j in used:
                continue
            g = m.node_gain[i, j]
            if g > best_g:
                best_j, best_g = j, g
        if best_j >= 0:
            mapping[i] = best_j
            used.add(best_j)
    return mapping


def _random_start(m: _Matcher, rng: np.random.Generator) -> list[int]:
    mapping = [-1] * m.na
    perm = rng.permutation(m.nb)
    for i in range(min(m.na, m.nb)):
        mapping[i] = int(perm[i])
    rng.shuffle(mapping)
    return mapping


def _local_score(m: _Matcher, mapping: list[int], i: int) -> int:
    """Node gain of i plus matched a-edges incident to i under mapping."""
    j = mapping[i]
    if j < 0:
        s = 0
    else:
        s = int(m.node_gain[i, j])
    for c in m.a_out.get(i, []):
        jc = mapping[c]
        if j >= 0 and jc >= 0 and (j, jc) in m.b_edges:
            s += 1
    for p in m.a_in.get(i, []):
        jp = mapping[p]
        if jp >= 0 and j >= 0 and (jp, j) in m.b_edges:
            s += 1
    return s


def _pair_score(m: _Matcher, mapping: list[int], i: int, k: int) -> int:
    """Local score of {i, k} with edges between them counted once."""
    s = _local_score(m, mapping, i) + _local_score(m, mapping, k)
    ji, jk = mapping[i], mapping[k]
    if ji >= 0 and jk >= 0:
        if k in m.a_out.get(i, []) and (ji, jk) in m.b_edges:
            s -= 1
        if i in m.a_out.get(k, []) and (jk, ji) in m.b_edges:
            s -= 1
    return s


def _hillclimb_from(m: _Matcher, mapping: list[int]) -> tuple[list[int], int]:
    """Steepest-ascent local search over single moves and pairwise swaps."""
    current = m.matched(mapping)
    while True:
        best_delta = 0
        best_apply = None
        used = set(j for j in mapping if j >= 0)
        # move: remap node i to a free target (or unmap it)
        for i in range(m.na):
            old = mapping[i]
            before = _local_score(m, mapping, i)
            candidates = [j for j in range(m.nb) if j not in used]
            if old >= 0:
                candidates.append(-1)
            for j in candidates:
                mapping[i] = j
                delta = _local_score(m, mapping, i) - before
                if delta > best_delta:
                    best_delta = delta
                    best_apply = ("move", i, j)
            mapping[i] = old
        # swap the images of two a-nodes
        for i in range(m.na):
            for k in range(i + 1, m.na):
                if mapping[i] == mapping[k]:
                    continue
                before = _pair_score(m, mapping, i, k)
                mapping[i], mapping[k] = mapping[k], mapping[i]
                delta = _pair_score(m, mapping, i, k) - before
                mapping[i], mapping[k] = mapping[k], mapping[i]
                if delta > best_delta:
                    best_delta = delta
                    best_apply = ("swap", i, k)
        if best_apply is None:
            return mapping, current
        kind, x, y = best_apply
        if kind == "move":
            mapping[x] = y
        else:
            mapping[x], mapping[y] = mapping[y], mapping[x]
        current += best_delta


def smatch_hillclimb(a: PlanTree, b: PlanTree, restarts: int = 4,
                     seed: int = 0) -> SmatchResult:
    """Best-of-restarts hill-climbing Smatch.

    The first restart starts from the typed-anchor greedy mapping; the rest
    from random injective mappings drawn from the seeded generator.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    ta, tb = extract_triples(a), extract_triples(b)
    m = _Matcher(ta, tb)
    rng = np.random.default_rng(seed)
    best = None
    for r in range(restarts):
        start = _greedy_typed_start(m) if r == 0 else _random_start(m, rng)
        mapping, matched = _hillclimb_from(m, start)
        if best is None or matched > best[1]:
            best = (list(mapping), matched)
    return m.result(best[0], restarts_used=restarts)


def smatch_exact(a: PlanTree, b: PlanTree) -> SmatchResult:
    """Exhaustive maximum-F1 matching with branch-and-bound pruning.

    Guarded: the smaller tree must have at most EXACT_GUARD_NODES nodes.
    """
    ta, tb = extract_triples(a), extract_triples(b)
    swapped = len(ta.instances) > len(tb.instances)
    if swapped:
        ta, tb = tb, ta
    if len(ta.instances) > EXACT_GUARD_NODES:
        raise TooLarge(
            f"min(node_count) = {len(ta.instances)} exceeds guard {EXACT_GUARD_NODES}")

    m = _Matcher(ta, tb)
    na, nb = m.na, m.nb
    # optimistic per-node upper bound: best node gain + incident a-edges
    edge_bonus = [len(m.a_out.get(i, [])) + len(m.a_in.get(i, [])) for i in range(na)]
    node_ub = [int(m.node_gain[i].max(initial=0)) + edge_bonus[i] for i in range(na)]
    suffix_ub = [0] * (na + 1)
    for i in range(na - 1, -1, -1):
        suffix_ub[i] = suffix_ub[i + 1] + node_ub[i]

    best_mapping = [-1] * na
    best_matched = -1
    mapping = [-1] * na
    used = [False] * nb

    def dfs(i: int, matched: int) -> None:
        nonlocal best_matched, best_mapping
        if matched + suffix_ub[i] <= best_matched:
            return
        if i == na:
            if matched > best_matched:
                best_matched = matched
                best_mapping = list(mapping)
            return
        for j in list(range(nb)) + [-1]:
            if j >= 0 and used[j]:
                continue
            gain = 0
            if j >= 0:
                gain = int(m.node_gain[i, j])
                for c in m.a_out.get(i, []):
                    if c < i and (j, mapping[c]) in m.b_edges:
                        gain += 1
                for p in m.a_in.get(i, []):
                    if p < i and (mapping[p], j) in m.b_edges:
                        gain += 1
                used[j] = True
            mapping[i] = j
            dfs(i + 1, matched + gain)
            mapping[i] = -1
            if j >= 0:
                used[j] = False

    dfs(0, 0)
    res = m.result(best_mapping)
    if swapped:
        res = SmatchResult(score=res.score, precision=res.recall,
                           recall=res.precision,
                           mapping={v: k for k, v in res.mapping.items()})
    return res


def pair_seed(seed: int, pair_index: int) -> int:
    """Per-pair seed derivation for parallel corpus scoring."""
    return (seed ^ pair_index) & 0x7FFFFFFF
