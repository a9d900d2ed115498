"""Self-check suites: engine agreement, path refinement properties, encoder checks."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib.resources import files
from typing import Callable

import numpy as np

from . import autodiff as ad
from .kg import KnowledgeGraph, augment_inverses, load_triples, relabel
from .matcher import (
    brute_force_counts,
    brute_force_mine,
    match_pattern,
    mine,
    spmm_matrix,
    ternary_hyperedges,
)
from .model import (
    GraphScorer,
    ModelConfig,
    _EntityView,
    _RelationView,
    encode_relations,
    init_parameters,
    motif_baseline_encode,
)
from .relation_graph import build
from .synthetic import random_kg
from .training import batch_loss
from .vocabulary import THREE_PATHS, TWO_PATHS, builtin_vocabulary, custom_vocabulary, spans


@dataclass
class SuiteResult:
    name: str
    passed: bool = True
    checked: int = 0
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def fail(self, message: str) -> None:
        self.passed = False
        if len(self.failures) < 20:
            self.failures.append(message)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} {self.name}: {self.checked} checks in {self.seconds:.2f}s"
        return line if self.passed else line + "; " + "; ".join(self.failures[:3])


def fixture_path(name: str):
    return files("graphlet_kg") / "fixtures" / name


def load_fixture(name: str) -> KnowledgeGraph:
    return load_triples(fixture_path(name))


def random_corpus(n_graphs: int, seed: int = 0, max_entities: int = 8, max_relations: int = 5,
                  max_triples: int = 14) -> list[KnowledgeGraph]:
    rng = np.random.default_rng(seed)
    return [random_kg(rng, max_entities, max_relations, max_triples) for _ in range(n_graphs)]


def _timed(fn: Callable[..., SuiteResult]) -> Callable[..., SuiteResult]:
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__, wrapper.__doc__ = fn.__name__, fn.__doc__
    return wrapper


@_timed
def check_oracle(n_graphs: int = 200, seed: int = 0, vocabulary: str = "V3+") -> SuiteResult:
    """Production matcher against dense exhaustive enumeration."""
    res = SuiteResult("oracle")
    v = builtin_vocabulary(vocabulary)
    for i, g in enumerate(random_corpus(n_graphs, seed)):
        for injective in (True, False):
            got, want = mine(g, v, injective), brute_force_mine(g, v, injective)
            res.checked += 1
            if got != want:
                diff = sorted(set(got) ^ set(want), key=str)[:3]
                res.fail(f"graph {i} injective={injective}: {diff}")
    return res


@_timed
def check_spanned_orders(n_graphs: int = 200, seed: int = 0) -> SuiteResult:
    """Spanned orders and 'absent anchored path implies absent refinement'."""
    res = SuiteResult("theorem1")
    expected = {(1, 1, 3), (1, 2, 3), (1, 3, 3)}
    res.checked += 1
    if set(spans((1, 3), 3)) != expected:
        res.fail(f"spans((1,3),3) = {sorted(spans((1, 3), 3))}")
    res.checked += 1
    if len(spans((1, 4), 4)) != 16:
        res.fail("spans((1,4),4) should have 16 members")
    for i, g in enumerate(random_corpus(n_graphs, seed)):
        R = g.num_relations
        for p in THREE_PATHS:
            ternary = ternary_hyperedges(g, p)
            for a in range(R):
                for c in range(R):
                    if match_pattern(g, p, a, c, injective=False):
                        continue
                    # spanned orders: middle equal to first, to last, or anything else
                    for b in range(R):
                        res.checked += 1
                        if ternary.get((a, b, c), 0):
                            res.fail(f"graph {i} {p.name}: binary ({a},{c}) absent but ternary ({a},{b},{c}) present")
    return res


@_timed
def check_refinement_sum(n_graphs: int = 200, seed: int = 0) -> SuiteResult:
    """Anchored weight equals the sum of its ternary refinements, on both engines."""
    res = SuiteResult("theorem2")
    for i, g in enumerate(random_corpus(n_graphs, seed)):
        R = g.num_relations
        for p in THREE_PATHS:
            ternary = ternary_hyperedges(g, p)
            dense3 = brute_force_counts(g, p, ternary=True)
            dense2 = brute_force_counts(g, p)
            for a in range(R):
                for c in range(R):
                    eps = match_pattern(g, p, a, c, injective=False)
                    parts = [ternary.get((a, b, c), 0) for b in range(R)]
                    res.checked += 1
                    if eps != sum(parts) or any(w > eps for w in parts):
                        res.fail(f"graph {i} {p.name}({a},{c}): eps={eps} parts={parts}")
                    if eps == 0 and any(parts):
                        res.fail(f"graph {i} {p.name}({a},{c}): eps=0 with ternary edge")
                    if parts != [int(x) for x in dense3[a, :, c]] or eps != int(dense2[a, c]):
                        res.fail(f"graph {i} {p.name}({a},{c}): engines disagree")
    return res


@_timed
def check_spmm(n_graphs: int = 100, seed: int = 0) -> SuiteResult:
    """Masked sparse products against the matcher for the two-path patterns."""
    res = SuiteResult("spmm")
    for i, g in enumerate(random_corpus(n_graphs, seed)):
        R = g.num_relations
        for p in TWO_PATHS:
            got = spmm_matrix(g, p)
            for a in range(R):
                for b in range(R):
                    res.checked += 1
                    want = match_pattern(g, p, a, b, injective=False)
                    if got[a, b] != want:
                        res.fail(f"graph {i} {p.name}({a},{b}): spmm={got[a, b]} matcher={want}")
    return res


@_timed
def check_expressiveness(draws: int = 50, seed: int = 0, dim: int = 8, layers: int = 3) -> SuiteResult:
    """Cyclic three-relation graph: graphlet encoder separates r2/r3, the ternary baseline cannot."""
    res = SuiteResult("expressiveness")
    g = load_fixture("cyclic.tsv")
    v = custom_vocabulary(["fffc"])
    rg = build(g, v)
    hyper = list(ternary_hyperedges(g, "fffc"))
    r1, r2, r3 = (g.relation_id(n) for n in ("r1", "r2", "r3"))
    cfg = ModelConfig(dim=dim, relation_layers=layers, entity_layers=1)
    rng = np.random.default_rng(seed)
    min_gap = np.inf
    for k in range(draws):
        params = init_parameters(cfg, 1, rng, random_biases=True)
        enc = encode_relations(rg, r1, params, cfg)
        agg = enc.aggregates[0]
        res.checked += 1
        if np.any(agg[r2] != 0) or not np.array_equal(agg[r3], params["rel.0.meta"].data[0]):
            res.fail(f"draw {k}: first-layer aggregates differ from the worked example")
        for t, layer in enumerate(enc.layers[1:], start=1):
            gap = float(np.linalg.norm(layer[r2] - layer[r3]))
            min_gap = min(min_gap, gap)
            res.checked += 1
            if not gap > 1e-9:
                res.fail(f"draw {k} layer {t}: graphlet encoder gap {gap:g}")
        for t, layer in enumerate(motif_baseline_encode(hyper, g.num_relations, r1, params, cfg)[1:], start=1):
            res.checked += 1
            if not np.array_equal(layer[r2], layer[r3]):
                res.fail(f"draw {k} layer {t}: ternary baseline separated r2 and r3")
    res.detail["min_gap"] = min_gap
    return res


def _gradient_graph() -> KnowledgeGraph:
    rows = [("a", "p", "b"), ("b", "p", "c"), ("a", "q", "c"), ("c", "s", "d"), ("d", "p", "e"),
            ("e", "q", "a"), ("b", "s", "e")]
    return augment_inverses(KnowledgeGraph.from_named_triples(rows))


@_timed
def check_gradients(points: int = 20, seed: int = 0, coords_per_group: int = 3, h: float = 1e-6,
                    tol: float = 1e-4) -> SuiteResult:
    """Reverse-mode gradients against central differences for every parameter group."""
    res = SuiteResult("gradients")
    g = _gradient_graph()
    v = builtin_vocabulary("V2")
    rg = build(g, v)
    cfg = ModelConfig(dim=4, relation_layers=2, entity_layers=2, num_negatives=3)
    views = (_RelationView.of(rg), _EntityView.of(g))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(points):
        params = init_parameters(cfg, len(v.patterns), rng, random_biases=True)
        batch = [g.triples[int(i)] for i in rng.integers(0, len(g.triples), size=2)]
        negs = [rng.integers(0, g.num_entities, size=cfg.num_negatives) for _ in batch]

        def loss_value():
            with ad.no_grad():
                return float(batch_loss(g, rg, params, cfg, batch, negs, views).data)

        params.zero_grad()
        batch_loss(g, rg, params, cfg, batch, negs, views).backward()
        for name, tensor in params.items():
            grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            flat = rng.choice(tensor.data.size, size=min(coords_per_group, tensor.data.size), replace=False)
            for j in flat:
                idx = np.unravel_index(j, tensor.data.shape)
                old = tensor.data[idx]
                tensor.data[idx] = old + h
                up = loss_value()
                tensor.data[idx] = old - h
                down = loss_value()
                tensor.data[idx] = old
                numeric = (up - down) / (2 * h)
                analytic = float(grad[idx])
                rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-7)
                worst = max(worst, rel)
                res.checked += 1
                if rel >= tol:
                    res.fail(f"point {k} {name}{idx}: analytic {analytic:.3e} numeric {numeric:.3e}")
    res.detail["worst_relative_error"] = worst
    return res


def _relation_perm_augmented(perm: np.ndarray) -> list[int]:
    out = [0] * (2 * len(perm))
    for k, p in enumerate(perm):
        out[2 * k], out[2 * k + 1] = 2 * int(p), 2 * int(p) + 1
    return out


@_timed
def check_isomorphism(pairs: int = 50, seed: int = 0, vocabulary: str = "V2+", tol: float = 1e-9) -> SuiteResult:
    """Full pipeline scores commute with entity and relation relabelling."""
    res = SuiteResult("isomorphism")
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(dim=8, relation_layers=2, entity_layers=2)
    v = builtin_vocabulary(vocabulary)
    worst = 0.0
    for k in range(pairs):
        base = random_kg(rng, max_entities=7, max_relations=3, max_triples=12)
        ep = rng.permutation(base.num_entities)
        rp = rng.permutation(base.num_relations)
        g1 = augment_inverses(base)
        g2 = augment_inverses(relabel(base, ep.tolist(), rp.tolist(),
                                      [f"n{i}" for i in range(base.num_entities)],
                                      [f"t{i}" for i in range(base.num_relations)]))
        rmap = _relation_perm_augmented(rp)
        params = init_parameters(cfg, len(v.patterns), rng, random_biases=True)
        s1 = GraphScorer(g1, build(g1, v), params, cfg)
        s2 = GraphScorer(g2, build(g2, v), params, cfg)
        for h in range(g1.num_entities):
            for q in range(g1.num_relations):
                a = s1.score_tails(h, q)
                b = s2.score_tails(int(ep[h]), rmap[q])[ep]
                gap = float(np.max(np.abs(a - b)))
                worst = max(worst, gap)
                res.checked += 1
                if gap > tol:
                    res.fail(f"pair {k} query ({h},{q}): max score gap {gap:.3e}")
    res.detail["worst_gap"] = worst
    return res


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "oracle": check_oracle,
    "theorem1": check_spanned_orders,
    "theorem2": check_refinement_sum,
    "spmm": check_spmm,
    "expressiveness": check_expressiveness,
    "gradients": check_gradients,
    "isomorphism": check_isomorphism,
}


def run_suite(name: str, **kwargs) -> SuiteResult:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](**kwargs)
