import itertools
import time

import numpy as np
import pytest
from hypothesis import given

from graphlet_kg.kg import KnowledgeGraph, augment_inverses
from graphlet_kg.matcher import (
    MAX_WEIGHT,
    OccurrenceClass,
    _check_weight,
    brute_force_counts,
    brute_force_mine,
    match_pattern,
    mine,
    motif_ternary_count,
    occurrences_to_tsv,
    spmm_count,
    spmm_matrix,
    ternary_hyperedges,
)
from graphlet_kg.vocabulary import (
    EXISTENCE,
    REL1,
    REL2,
    THREE_PATHS,
    TWO_PATHS,
    builtin_vocabulary,
    custom_vocabulary,
    get_pattern,
)

from conftest import small_graphs


def enumerate_count(g, p, r1, r2, middle=None):
    """Loop over every assignment of entities (and the wildcard) and test each edge."""
    total = 0
    mids = range(g.num_relations) if middle is None else [middle]
    for values in itertools.product(range(g.num_entities), repeat=len(p.entity_vars)):
        env = dict(zip(p.entity_vars, values))
        if any(env[a] == env[b] for a, b in p.filters):
            continue
        for w in (mids if p.has_wildcard else [None]):
            slot_rel = {REL1: r1, REL2: r2}
            ok = True
            for e in p.edges:
                rel = slot_rel.get(e.slot, w)
                if (env[e.src], rel, env[e.dst]) not in g:
                    ok = False
                    break
            total += ok
    return total


def names(g, classes):
    return {(c.pattern, g.relation_names[c.r1], g.relation_names[c.r2], c.weight) for c in classes}


class TestGoldenIKG:
    """Two-path and three-path classes on the seven-edge example graph."""

    def test_seven_classes(self, ikg):
        got = names(ikg, mine(ikg, custom_vocabulary(["ff_o", "fff_o"])))
        assert got == {
            ("ffo", "r1", "r2", 1), ("ffo", "r1", "r4", 1), ("ffo", "r1", "r5", 1),
            ("ffo", "r2", "r3", 1), ("ffo", "r4", "r3", 1), ("ffo", "r5", "r3", 1),
            ("fffo", "r1", "r3", 3),
        }

    def test_weight_is_sum_of_ternary(self, ikg):
        r1, r3 = ikg.relation_id("r1"), ikg.relation_id("r3")
        parts = {ikg.relation_names[m]: motif_ternary_count(ikg, "tfh", r1, m, r3) for m in range(5)}
        assert parts == {"r1": 0, "r2": 1, "r3": 0, "r4": 1, "r5": 1}
        assert sum(parts.values()) == match_pattern(ikg, "fffo", r1, r3)

    def test_closed_patterns_absent(self, ikg):
        closed = [p for p in builtin_vocabulary("V3+") if p.closed]
        assert mine(ikg, custom_vocabulary(closed)) == []

    def test_existence_mode(self, ikg):
        v = custom_vocabulary(["fffo"], mode=EXISTENCE)
        assert [c.weight for c in mine(ikg, v)] == [1]


class TestGoldenCyclic:
    def test_three_closed_classes(self, cyclic):
        got = names(cyclic, mine(cyclic, custom_vocabulary(["fff_c"])))
        assert got == {("fffc", "r1", "r3", 1), ("fffc", "r2", "r1", 1), ("fffc", "r3", "r2", 1)}

    def test_single_hyperedge(self, cyclic):
        assert ternary_hyperedges(cyclic, "fffc") == {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1}


class TestMatchPattern:
    def test_injective_rejects_equal_relations(self, ikg):
        with pytest.raises(ValueError, match="injective"):
            match_pattern(ikg, "ffo", 0, 0)
        assert match_pattern(ikg, "ffo", 0, 0, injective=False) == 0

    def test_out_of_range(self, ikg):
        with pytest.raises(ValueError):
            match_pattern(ikg, "ffo", 0, 99)

    def test_overflow_guard(self):
        assert _check_weight(MAX_WEIGHT) == MAX_WEIGHT
        with pytest.raises(OverflowError):
            _check_weight(MAX_WEIGHT + 1)

    def test_self_loop_filtered(self):
        g = KnowledgeGraph.from_named_triples([("a", "p", "a"), ("a", "q", "b")])
        p, q = g.relation_id("p"), g.relation_id("q")
        assert match_pattern(g, "ffo", p, q) == 0
        assert match_pattern(g, get_pattern("ff"), p, q) == 1

    def test_printed_vs_strict_filters_differ(self):
        # the printed 1-2 star filters leave ?e1 == ?e3 allowed, so a centre self-loop counts
        g = KnowledgeGraph.from_named_triples([("a", "p", "b"), ("b", "q", "c"), ("b", "q", "b")])
        p, q = g.relation_id("p"), g.relation_id("q")
        printed = match_pattern(g, "ffo_1-2", p, q)
        strict = match_pattern(g, get_pattern("ffo_1-2").strict(), p, q)
        assert printed == 1 and strict == 0


class TestEngineAgreement:
    """Index-join matcher, einsum oracle and plain enumeration agree."""

    @given(small_graphs(max_entities=5))
    def test_mine_equals_brute_force(self, g):
        v = builtin_vocabulary("V3+")
        for injective in (True, False):
            assert mine(g, v, injective) == brute_force_mine(g, v, injective)

    @given(small_graphs(max_entities=4, max_relations=2, max_triples=7))
    def test_einsum_equals_enumeration(self, g):
        for p in TWO_PATHS + THREE_PATHS[:4]:
            dense = brute_force_counts(g, p)
            for a in range(g.num_relations):
                for b in range(g.num_relations):
                    assert dense[a, b] == enumerate_count(g, p, a, b)

    @given(small_graphs(max_entities=4, max_relations=2, max_triples=7))
    def test_ternary_equals_enumeration(self, g):
        for p in THREE_PATHS[::3]:
            for a, m, b in itertools.product(range(g.num_relations), repeat=3):
                assert motif_ternary_count(g, p, a, m, b) == enumerate_count(g, p, a, b, middle=m)

    def test_brute_force_size_limit(self):
        g = KnowledgeGraph([f"e{i}" for i in range(13)], ["p"], [(0, 0, 1)])
        with pytest.raises(ValueError, match="refused"):
            brute_force_mine(g, builtin_vocabulary("V2"))

    def test_parallel_matches_serial(self, ikg):
        g = augment_inverses(ikg)
        v = builtin_vocabulary("V3")
        assert mine(g, v, workers=2) == mine(g, v, workers=1)


class TestRefinementProperties:
    """Anchored three-path weights against their middle-relation refinements."""

    @given(small_graphs())
    def test_binary_is_sum_of_ternary(self, g):
        for p in THREE_PATHS:
            hyper = ternary_hyperedges(g, p)
            for a in range(g.num_relations):
                for c in range(g.num_relations):
                    eps = match_pattern(g, p, a, c, injective=False)
                    parts = [hyper.get((a, b, c), 0) for b in range(g.num_relations)]
                    assert eps == sum(parts)
                    assert all(w <= eps for w in parts)

    @given(small_graphs())
    def test_existence_dominance(self, g):
        binary = {(c.pattern, c.r1, c.r2) for c in mine(g, custom_vocabulary(THREE_PATHS), injective=False)}
        for p in THREE_PATHS:
            for (a, _, c) in ternary_hyperedges(g, p):
                assert (p.name, a, c) in binary


class TestSparseProducts:
    @given(small_graphs())
    def test_spmm_equals_matcher(self, g):
        for p in TWO_PATHS:
            m = spmm_matrix(g, p)
            for a in range(g.num_relations):
                for b in range(g.num_relations):
                    assert m[a, b] == match_pattern(g, p, a, b, injective=False)

    def test_rejects_three_paths(self, ikg):
        with pytest.raises(ValueError):
            spmm_count(ikg, "fffo", 0, 2)


def test_tsv_output(ikg):
    text = occurrences_to_tsv(ikg, [OccurrenceClass("ffo", 0, 1, 1)])
    assert text == "ffo\tr1\tr2\t1\n"


def test_golden_runtime(ikg):
    t0 = time.perf_counter()
    mine(ikg, custom_vocabulary(["ff_o", "fff_o"]))
    assert time.perf_counter() - t0 < 1.0
