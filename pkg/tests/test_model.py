import numpy as np
import pytest
from hypothesis import given

from graphlet_kg import autodiff as ad
from graphlet_kg.kg import augment_inverses, relabel
from graphlet_kg.matcher import ternary_hyperedges
from graphlet_kg.model import (
    Checkpoint,
    GraphScorer,
    ModelConfig,
    bce_loss,
    encode_entities,
    encode_relations,
    init_parameters,
    load_checkpoint,
    motif_baseline_encode,
    save_checkpoint,
    score,
    self_adversarial_weights,
)
from graphlet_kg.relation_graph import build
from graphlet_kg.vocabulary import builtin_vocabulary, custom_vocabulary

from conftest import small_graphs

SMALL = ModelConfig(dim=6, relation_layers=2, entity_layers=2)


class TestCyclicExample:
    """Relation encodings on the three-relation cycle with query r1."""

    def setup_method(self):
        from graphlet_kg.verify import load_fixture
        self.g = load_fixture("cyclic.tsv")
        self.rg = build(self.g, custom_vocabulary(["fffc"]))
        self.cfg = ModelConfig(dim=5, relation_layers=3, entity_layers=1)

    def test_layer_zero_is_query_indicator(self):
        params = init_parameters(self.cfg, 1, 0)
        enc = encode_relations(self.rg, 0, params, self.cfg)
        np.testing.assert_array_equal(enc.layers[0], [[1.0] * 5, [0.0] * 5, [0.0] * 5])

    def test_first_layer_aggregates(self):
        params = init_parameters(self.cfg, 1, 3, random_biases=True)
        agg = encode_relations(self.rg, 0, params, self.cfg).aggregates[0]
        np.testing.assert_array_equal(agg[1], np.zeros(5))
        np.testing.assert_array_equal(agg[2], params["rel.0.meta"].data[0])

    def test_separation_vs_baseline(self):
        hyper = list(ternary_hyperedges(self.g, "fffc"))
        rng = np.random.default_rng(5)
        for _ in range(10):
            params = init_parameters(self.cfg, 1, rng, random_biases=True)
            ours = encode_relations(self.rg, 0, params, self.cfg).layers
            base = motif_baseline_encode(hyper, 3, 0, params, self.cfg)
            for t in range(1, 4):
                assert np.linalg.norm(ours[t][1] - ours[t][2]) > 1e-9
                assert np.array_equal(base[t][1], base[t][2])


class TestScoring:
    def test_shapes_and_consistency(self, ikg):
        g = augment_inverses(ikg)
        v = builtin_vocabulary("V2")
        rg = build(g, v)
        params = init_parameters(SMALL, len(v), 0)
        scores = GraphScorer(g, rg, params, SMALL).score_tails(0, 0)
        assert scores.shape == (g.num_entities,)
        assert score(g, rg, params, SMALL, (0, 0, 3)) == pytest.approx(scores[3], abs=0)
        rel = encode_relations(rg, 0, params, SMALL)
        x = encode_entities(g, rel, 0, 0, params, SMALL)
        assert x.shape == (g.num_entities, SMALL.dim)

    def test_query_row_mode(self, ikg):
        g = augment_inverses(ikg)
        v = builtin_vocabulary("V2")
        rg = build(g, v)
        cfg = ModelConfig(dim=6, relation_layers=2, entity_layers=2, entity_message="query_row")
        params = init_parameters(cfg, len(v), 0)
        assert np.isfinite(GraphScorer(g, rg, params, cfg).score_tails(1, 2)).all()

    def test_edge_type_mismatch(self, ikg):
        rg = build(ikg, builtin_vocabulary("V2"))
        params = init_parameters(SMALL, 3, 0)
        with pytest.raises(ValueError, match="edge types"):
            encode_relations(rg, 0, params, SMALL)

    @given(small_graphs(max_entities=5, max_relations=2, max_triples=8))
    def test_relabel_invariance(self, base):
        rng = np.random.default_rng(base.num_entities * 7 + len(base))
        ep, rp = rng.permutation(base.num_entities), rng.permutation(base.num_relations)
        g1 = augment_inverses(base)
        g2 = augment_inverses(relabel(base, ep.tolist(), rp.tolist()))
        rmap = [2 * int(rp[k // 2]) + k % 2 for k in range(g1.num_relations)]
        v = builtin_vocabulary("V2")
        params = init_parameters(SMALL, len(v), rng, random_biases=True)
        s1, s2 = GraphScorer(g1, build(g1, v), params, SMALL), GraphScorer(g2, build(g2, v), params, SMALL)
        for q in range(g1.num_relations):
            np.testing.assert_allclose(s1.score_tails(0, q), s2.score_tails(int(ep[0]), rmap[q])[ep], atol=1e-9)


class TestLoss:
    def test_matches_log_sigmoid_formula(self, rng):
        pos, neg = rng.normal(size=3), rng.normal(size=(3, 4))
        sig = lambda x: 1 / (1 + np.exp(-x))  # noqa: E731
        want = -np.mean(np.log(sig(pos)) + np.mean(np.log(1 - sig(neg)), axis=1))
        assert float(bce_loss(pos, neg).data) == pytest.approx(want, rel=1e-12)

    def test_weighted_negatives(self, rng):
        pos, neg = rng.normal(size=2), rng.normal(size=(2, 5))
        uniform = np.full((2, 5), 0.2)
        assert float(bce_loss(pos, neg, uniform).data) == pytest.approx(float(bce_loss(pos, neg).data))
        w = self_adversarial_weights(neg, 1.0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0)
        assert np.argmax(w[0]) == np.argmax(neg[0])

    def test_requires_positives(self):
        with pytest.raises(ValueError, match="positive"):
            bce_loss(np.zeros(0), np.zeros((0, 3)))
        with pytest.raises(ValueError, match="negative"):
            bce_loss(np.zeros(2), np.zeros((2, 0)))

    def test_extreme_logits_finite(self):
        loss = bce_loss(ad.Tensor(np.array([-800.0])), ad.Tensor(np.array([[900.0]])))
        assert np.isfinite(loss.data)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"dim": 0}, {"num_negatives": 0}, {"entity_message": "x"},
                                        {"message_kind": "sum"}, {"norm_kind": "batch"}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        params = init_parameters(SMALL, 8, 1, random_biases=True)
        vocab = {"name": "V2", "patterns": list(builtin_vocabulary("V2").pattern_names)}
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, Checkpoint(SMALL, params, vocab, {"inverses": True}))
        back = load_checkpoint(path, expect_vocabulary=vocab["patterns"])
        assert back.config == SMALL
        for name, t in params.items():
            assert np.array_equal(back.params[name].data, t.data)

    def test_vocabulary_mismatch_refused(self, tmp_path):
        params = init_parameters(SMALL, 8, 1)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, Checkpoint(SMALL, params, {"name": "V2", "patterns": ["ffo"]}))
        with pytest.raises(ValueError, match="does not match"):
            load_checkpoint(path, expect_vocabulary=["ffc"])

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestTransferFixtures:
    """Three differently named but isomorphic graphs get identical relation graphs and scores."""

    def test_identical_structure_and_scores(self):
        from graphlet_kg.verify import load_fixture
        graphs = [augment_inverses(load_fixture(n)) for n in ("family.tsv", "corporate.tsv", "scholarly.tsv")]
        assert len({g.entity_names for g in graphs}) == 3
        v = builtin_vocabulary("V3+")
        rgs = [build(g, v) for g in graphs]
        assert rgs[0].edges == rgs[1].edges == rgs[2].edges
        params = init_parameters(SMALL, len(v), 11, random_biases=True)
        scores = [GraphScorer(g, rg, params, SMALL).score_tails(0, 2) for g, rg in zip(graphs, rgs)]
        np.testing.assert_array_equal(scores[0], scores[1])
        np.testing.assert_array_equal(scores[0], scores[2])
