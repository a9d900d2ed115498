import pytest
from hypothesis import given, strategies as st

from graphlet_kg.kg import augment_inverses
from graphlet_kg.matcher import mine
from graphlet_kg.relation_graph import RelationEdge, RelationGraph, build, export, load, meta_neighborhood
from graphlet_kg.vocabulary import builtin_vocabulary, custom_vocabulary

from conftest import small_graphs


class TestBuild:
    def test_ikg_edges(self, ikg):
        rg = build(ikg, custom_vocabulary(["ff_o", "fff_o"]))
        assert rg.nodes == ikg.relation_names
        assert len(rg.edges) == 7
        assert RelationEdge("fffo", 0, 2, 3) in rg.edges
        assert rg.metadata["vocabulary"] == "custom"

    def test_isolated_relations_are_nodes(self, ikg):
        rg = build(ikg, custom_vocabulary(["ffc"]))
        assert rg.num_nodes == 5 and rg.edges == ()

    def test_epsilon_threshold(self, ikg):
        rg = build(ikg, custom_vocabulary(["ff_o", "fff_o"]), epsilon=2)
        assert [(e.type, e.weight) for e in rg.edges] == [("fffo", 3)]

    def test_epsilon_validation(self, ikg):
        with pytest.raises(ValueError):
            build(ikg, builtin_vocabulary("V2"), epsilon=0)

    @given(small_graphs(), st.integers(1, 4))
    def test_monotone_in_epsilon(self, g, eps):
        v = builtin_vocabulary("V2")
        low, high = set(build(g, v, eps).edges), set(build(g, v, eps + 1).edges)
        assert high <= low
        assert all(e.weight >= eps + 1 for e in high)

    def test_edges_match_mining(self, ikg):
        g = augment_inverses(ikg)
        v = builtin_vocabulary("V2+")
        rg = build(g, v)
        assert {(e.type, e.src, e.dst, e.weight) for e in rg.edges} == {
            (c.pattern, c.r1, c.r2, c.weight) for c in mine(g, v)}


class TestMetaNeighborhood:
    def test_inbound_sources(self, ikg):
        rg = build(ikg, custom_vocabulary(["ff_o", "fff_o"]))
        r3 = ikg.relation_id("r3")
        assert meta_neighborhood(rg, "ff_o", r3) == {ikg.relation_id(n) for n in ("r2", "r4", "r5")}
        assert meta_neighborhood(rg, "fffo", r3) == {ikg.relation_id("r1")}
        assert meta_neighborhood(rg, "ffc", r3) == frozenset()


class TestSerialisation:
    @pytest.mark.parametrize("fmt", ["json", "tsv"])
    def test_roundtrip(self, ikg, tmp_path, fmt):
        rg = build(augment_inverses(ikg), builtin_vocabulary("V2"), epsilon=1)
        path = tmp_path / f"rg.{fmt}"
        export(rg, path, fmt)
        back = load(path)
        assert back == rg and back.metadata == rg.metadata

    def test_validation(self):
        with pytest.raises(ValueError, match="not declared"):
            RelationGraph(("a", "b"), ("ffo",), (RelationEdge("ffc", 0, 1, 1),))
        with pytest.raises(ValueError, match="below epsilon"):
            RelationGraph(("a", "b"), ("ffo",), (RelationEdge("ffo", 0, 1, 1),), epsilon=2)
