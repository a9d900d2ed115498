"""Graphlet occurrence counting.

Three independent engines share one result contract:

* :func:`mine` / :func:`match_pattern` -- index-join backtracking seeded from
  the ``REL1`` edge, used in production;
* :func:`brute_force_mine` -- dense exhaustive evaluation over every entity
  assignment (numpy ``einsum`` without contraction-order optimisation), the
  test oracle;
* :func:`spmm_count` -- masked sparse products for two-path patterns.

A *solution* binds every entity variable and every relation slot, the
wildcard included, so two middle relations between the same entities count
as two occurrences. This keeps the anchored weight equal to the sum of its
ternary refinements.
"""

from __future__ import annotations

import string
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph
from .vocabulary import (
    COUNT,
    EXISTENCE,
    REL1,
    REL2,
    TWO_PATHS,
    WILDCARD,
    GraphletPattern,
    Vocabulary,
    get_pattern,
)

MAX_WEIGHT = 2**63 - 1
BRUTE_FORCE_MAX_ENTITIES = 12

# ternary motif names of the hypergraph baseline and their path patterns
MOTIF_NAMES = {"tfh": "fffo", "tft": "ffro", "hfh": "frfo", "hft": "rffo"}


@dataclass(frozen=True, order=True)
class OccurrenceClass:
    pattern: str
    r1: int
    r2: int
    weight: int


def _check_weight(weight: int) -> int:
    if weight > MAX_WEIGHT:
        raise OverflowError(f"occurrence weight {weight} exceeds 64-bit range")
    return weight


def _apply_mode(count: int, mode: str) -> int:
    if mode == EXISTENCE:
        return min(1, count)
    if mode == COUNT:
        return _check_weight(count)
    raise ValueError(f"unknown matching mode {mode!r}")


# index-join engine ------------------------------------------------------

def _plan(pattern: GraphletPattern, fixed: Sequence[str]):
    """Order edges: start at a REL1 edge, then always extend from bound variables.

    Preference among connected edges: both ends bound, then a fixed or
    already-bound relation slot, then an unbound named slot, wildcard last.
    """
    remaining = list(pattern.edges)
    first = next(e for e in remaining if e.slot == REL1)
    order = [first]
    remaining.remove(first)
    bound_vars = {first.src, first.dst}
    known_slots = set(fixed) | {REL1}
    while remaining:
        def rank(e):
            touches = (e.src in bound_vars) + (e.dst in bound_vars)
            if touches == 0:
                return (9,)
            if touches == 2 or (e.src == e.dst):
                return (0,)
            if e.slot in known_slots:
                return (1,)
            return (2,) if e.slot != WILDCARD else (3,)
        best = min(remaining, key=lambda e: (rank(e), pattern.edges.index(e)))
        if rank(best) == (9,):
            raise ValueError(f"{pattern.name}: pattern is not connected")
        order.append(best)
        remaining.remove(best)
        bound_vars |= {best.src, best.dst}
        known_slots.add(best.slot)
    return order


def _compile(pattern: GraphletPattern, fixed: Sequence[str]):
    order = _plan(pattern, fixed)
    var_ix = {v: i for i, v in enumerate(pattern.entity_vars)}
    pairs = [(var_ix[a], var_ix[b]) for a, b in set(tuple(sorted(p)) for p in pattern.filters)]
    steps = []
    bound: set[int] = set()
    for e in order:
        s, d = var_ix[e.src], var_ix[e.dst]
        new = {s, d} - bound
        bound |= {s, d}
        checks = [(a, b) for a, b in pairs if (a in new or b in new) and a in bound and b in bound]
        steps.append((s, d, e.slot, checks))
    return steps, len(pattern.entity_vars)


def _solutions(g: KnowledgeGraph, pattern: GraphletPattern, fixed: dict[str, int]) -> Counter:
    """Count solutions grouped by ``(rel1, rel2, wildcard-or-None)``."""
    steps, n_vars = _compile(pattern, list(fixed))
    assign = [-1] * n_vars
    slots = {REL1: fixed.get(REL1), REL2: fixed.get(REL2), WILDCARD: fixed.get(WILDCARD)}
    counts: Counter = Counter()
    last = len(steps)

    def ok(checks) -> bool:
        return all(assign[a] != assign[b] for a, b in checks)

    def descend(k: int):
        if k == last:
            counts[(slots[REL1], slots[REL2], slots[WILDCARD])] += 1
            return
        s, d, slot, checks = steps[k]
        r = slots[slot]
        hs, hd = assign[s], assign[d]
        if hs >= 0 and hd >= 0:
            if r is not None:
                if (hs, r, hd) in g:
                    descend(k + 1)
            else:
                for rel in g.relations_between(hs, hd):
                    slots[slot] = rel
                    descend(k + 1)
                slots[slot] = None
        elif hs >= 0:
            if r is not None:
                for t in g.tails(r, hs):
                    assign[d] = t
                    if ok(checks):
                        descend(k + 1)
            else:
                for rel, t in g.out_edges(hs):
                    assign[d] = t
                    slots[slot] = rel
                    if ok(checks):
                        descend(k + 1)
                slots[slot] = None
            assign[d] = -1
        elif hd >= 0:
            if r is not None:
                for h in g.heads(r, hd):
                    assign[s] = h
                    if ok(checks):
                        descend(k + 1)
            else:
                for rel, h in g.in_edges(hd):
                    assign[s] = h
                    slots[slot] = rel
                    if ok(checks):
                        descend(k + 1)
                slots[slot] = None
            assign[s] = -1
        else:
            if r is not None:
                seeds = ((h, r, t) for h, t in g.edges_of(r))
            else:
                seeds = g.triples
            was_free = r is None
            for h, rel, t in seeds:
                if s == d and h != t:
                    continue
                assign[s], assign[d] = h, t
                if was_free:
                    slots[slot] = rel
                if ok(checks):
                    descend(k + 1)
            if was_free:
                slots[slot] = None
            assign[s] = assign[d] = -1

    descend(0)
    return counts


def _check_relation(g: KnowledgeGraph, r: int) -> None:
    if not 0 <= r < g.num_relations:
        raise ValueError(f"relation id {r} out of range")


def match_pattern(
    g: KnowledgeGraph,
    p: GraphletPattern | str,
    r1: int,
    r2: int,
    mode: str = COUNT,
    injective: bool = True,
) -> int:
    """Weight of the class ``p(r1, r2)``: a 0/1 ASK answer or a solution count."""
    p = get_pattern(p) if isinstance(p, str) else p
    _check_relation(g, r1)
    _check_relation(g, r2)
    if injective and r1 == r2:
        raise ValueError("r1 == r2 is not an injective relation map; skip the pair or pass injective=False")
    total = sum(_solutions(g, p, {REL1: r1, REL2: r2}).values())
    return _apply_mode(total, mode)


def _pattern_classes(g: KnowledgeGraph, p: GraphletPattern, mode: str, injective: bool) -> list[OccurrenceClass]:
    per_pair: Counter = Counter()
    for (a, b, _), n in _solutions(g, p, {}).items():
        per_pair[(a, b)] += n
    out = []
    for (a, b), n in sorted(per_pair.items()):
        if injective and a == b:
            continue
        w = _apply_mode(n, mode)
        if w:
            out.append(OccurrenceClass(p.name, a, b, w))
    return out


def _pattern_classes_task(args):
    return _pattern_classes(*args)


def mine(
    g: KnowledgeGraph,
    v: Vocabulary,
    injective: bool = True,
    workers: int = 1,
) -> list[OccurrenceClass]:
    """Every nonzero class of every vocabulary pattern, ordered by (pattern, r1, r2).

    With ``workers > 1`` patterns are counted in separate processes; results
    are concatenated in vocabulary order, so output does not depend on it.
    """
    tasks = [(g, p, v.mode, injective) for p in v.patterns]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_pattern_classes_task, tasks))
    else:
        parts = [_pattern_classes(*t) for t in tasks]
    return [c for part in parts for c in part]


def motif_ternary_count(
    g: KnowledgeGraph,
    p3: GraphletPattern | str,
    r1: int,
    r2: int,
    r3: int,
) -> int:
    """Occurrences of a three-path pattern with the middle relation pinned to ``r2``.

    ``p3`` may be a path pattern (``"fffo"``, ``"frfc"``...) or a ternary motif
    name (``tfh``, ``tft``, ``hfh``, ``hft``), which maps to the open path.
    """
    p = _three_path_pattern(p3)
    for r in (r1, r2, r3):
        _check_relation(g, r)
    return _check_weight(sum(_solutions(g, p, {REL1: r1, REL2: r3, WILDCARD: r2}).values()))


def _three_path_pattern(p3) -> GraphletPattern:
    if isinstance(p3, str):
        p3 = get_pattern(MOTIF_NAMES.get(p3, p3))
    if not p3.is_three_path:
        raise ValueError(f"{p3.name} is not a three-path pattern")
    return p3


def ternary_hyperedges(g: KnowledgeGraph, p3: GraphletPattern | str) -> dict[tuple[int, int, int], int]:
    """Nonzero ternary classes ``(first, middle, last) -> weight`` of a three-path pattern."""
    p = _three_path_pattern(p3)
    out: dict[tuple[int, int, int], int] = {}
    for (a, b, mid), n in sorted(_solutions(g, p, {}).items()):
        out[(a, mid, b)] = n
    return out


# dense exhaustive oracle -------------------------------------------------

def _adjacency_tensor(g: KnowledgeGraph) -> np.ndarray:
    A = np.zeros((g.num_relations, g.num_entities, g.num_entities), dtype=np.int64)
    for h, r, t in g.triples:
        A[r, h, t] = 1
    return A


def _filter_mask(p: GraphletPattern, n: int) -> np.ndarray:
    k = len(p.entity_vars)
    idx = {v: i for i, v in enumerate(p.entity_vars)}
    grids = np.indices((n,) * k, sparse=True)
    mask = np.ones((n,) * k, dtype=np.int64)
    for a, b in p.filters:
        mask = mask * (grids[idx[a]] != grids[idx[b]])
    return mask


def brute_force_counts(g: KnowledgeGraph, p: GraphletPattern, ternary: bool = False) -> np.ndarray:
    """Solution counts for every relation assignment by exhaustive enumeration.

    Returns an ``(R, R)`` array indexed ``[rel1, rel2]``, or with
    ``ternary=True`` an ``(R, R, R)`` array indexed ``[rel1, middle, rel2]``.
    """
    n, R = g.num_entities, g.num_relations
    shape = (R, R, R) if ternary else (R, R)
    if n == 0 or R == 0:
        return np.zeros(shape, dtype=np.int64)
    A = _adjacency_tensor(g)
    letters = iter(string.ascii_lowercase[3:])
    var_letter = {v: next(letters) for v in p.entity_vars}
    operands, subs = [], []
    for e in p.edges:
        pair = var_letter[e.src] + var_letter[e.dst]
        if e.slot == REL1:
            operands.append(A)
            subs.append("a" + pair)
        elif e.slot == REL2:
            operands.append(A)
            subs.append("b" + pair)
        elif ternary:
            operands.append(A)
            subs.append("c" + pair)
        else:
            operands.append(A.sum(axis=0))
            subs.append(pair)
    operands.append(_filter_mask(p, n))
    subs.append("".join(var_letter[v] for v in p.entity_vars))
    out = "acb" if ternary else "ab"
    if ternary and not p.has_wildcard:
        raise ValueError(f"{p.name} has no wildcard slot")
    return np.einsum(",".join(subs) + "->" + out, *operands, optimize=False)


def brute_force_mine(
    g: KnowledgeGraph,
    v: Vocabulary,
    injective: bool = True,
    max_entities: int = BRUTE_FORCE_MAX_ENTITIES,
) -> list[OccurrenceClass]:
    """Oracle with the same contract as :func:`mine`, by exhaustive enumeration."""
    if g.num_entities > max_entities:
        raise ValueError(
            f"brute force over {g.num_entities} entities refused (limit {max_entities}); "
            "use mine() or raise max_entities"
        )
    out = []
    for p in v.patterns:
        counts = brute_force_counts(g, p)
        for a in range(g.num_relations):
            for b in range(g.num_relations):
                if injective and a == b:
                    continue
                w = _apply_mode(int(counts[a, b]), v.mode)
                if w:
                    out.append(OccurrenceClass(p.name, a, b, w))
    return out


# masked sparse products ---------------------------------------------------

def relation_adjacency(g: KnowledgeGraph, r: int) -> sp.csr_matrix:
    pairs = g.edges_of(r)
    n = g.num_entities
    if not pairs:
        return sp.csr_matrix((n, n), dtype=np.int64)
    rows, cols = zip(*pairs)
    return sp.csr_matrix((np.ones(len(pairs), dtype=np.int64), (rows, cols)), shape=(n, n))


def _tau(direction: str, A: sp.csr_matrix) -> sp.csr_matrix:
    return A if direction == "f" else A.T.tocsr()


def _off_diagonal(A: sp.csr_matrix) -> sp.csr_matrix:
    A = A.tolil(copy=True)
    A.setdiag(0)
    return A.tocsr()


def spmm_count(g: KnowledgeGraph, p: GraphletPattern | str, r1: int, r2: int) -> int:
    """Two-path weight from masked products of per-relation adjacency matrices.

    Open paths sum ``tau(u, A1)[l, m] * tau(v, A2)[m, n]`` over pairwise
    distinct ``l, m, n``; closed paths sum ``tau(u, A1)[l, m] * tau(v, A2)[m, l]``
    over ``l != m``.
    """
    p = get_pattern(p) if isinstance(p, str) else p
    if p not in TWO_PATHS:
        raise ValueError(f"spmm_count supports only the eight two-path patterns, not {p.name}")
    _check_relation(g, r1)
    _check_relation(g, r2)
    u, v = p.name[0], p.name[1]
    U = _off_diagonal(_tau(u, relation_adjacency(g, r1)))
    V = _tau(v, relation_adjacency(g, r2))
    if p.closed:
        return int(U.multiply(V.T).sum())
    P = U @ _off_diagonal(V)
    return int(P.sum() - P.diagonal().sum())


def spmm_matrix(g: KnowledgeGraph, p: GraphletPattern | str) -> np.ndarray:
    """``(R, R)`` matrix of :func:`spmm_count` over every relation pair."""
    R = g.num_relations
    out = np.zeros((R, R), dtype=np.int64)
    for a in range(R):
        for b in range(R):
            out[a, b] = spmm_count(g, p, a, b)
    return out


def occurrences_to_tsv(g: KnowledgeGraph, classes: Iterable[OccurrenceClass]) -> str:
    names = g.relation_names
    return "".join(f"{c.pattern}\t{names[c.r1]}\t{names[c.r2]}\t{c.weight}\n" for c in classes)
