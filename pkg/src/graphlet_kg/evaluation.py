"""Filtered ranking evaluation (MRR, Hits@n) and inductive splits."""

from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .kg import KnowledgeGraph

HITS_AT = (1, 3, 10)
SETTINGS = ("transductive", "ind_e", "ind_er")

TailScorer = Callable[[int, int], np.ndarray]


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    hits: dict[int, float]
    num_queries: int
    setting: str = "transductive"
    filtered: bool = True
    config_hash: str | None = None
    ranks: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "mrr": self.mrr,
            "hits": {str(n): v for n, v in sorted(self.hits.items())},
            "num_queries": self.num_queries,
            "filtered": self.filtered,
            "config_hash": self.config_hash,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def mid_rank(scores: np.ndarray, target: int, keep: np.ndarray | None = None) -> float:
    """``1 + #greater + (#equal - 1) / 2`` among kept candidates (the target is always kept)."""
    scores = np.asarray(scores, dtype=np.float64)
    s = scores[target]
    if not np.isfinite(s):
        raise ValueError(f"non-finite score for target {target}")
    mask = np.ones(scores.shape[0], dtype=bool) if keep is None else keep.copy()
    mask[target] = True
    cand = scores[mask]
    greater = int(np.count_nonzero(cand > s))
    equal = int(np.count_nonzero(cand == s))
    return 1.0 + greater + (equal - 1) / 2.0


def with_inverse_queries(g: KnowledgeGraph, triples: Iterable[tuple[int, int, int]]) -> list[tuple[int, int, int]]:
    """Each tail query ``(h, r, t)`` followed by its head query rewritten as ``(t, r^-1, h)``."""
    out = []
    for h, r, t in triples:
        out.append((h, r, t))
        out.append((t, g.inverse_of(r), h))
    return out


def evaluate(
    score_tails: TailScorer,
    g_inference: KnowledgeGraph,
    test_triples: Sequence[tuple[int, int, int]],
    filter_sets: Iterable[Iterable[tuple[int, int, int]]] = (),
    filtered: bool = True,
    setting: str = "transductive",
    config_hash: str | None = None,
    workers: int = 1,
) -> EvalReport:
    """Rank the true tail of every query ``(h, q, t)`` among all entities of ``g_inference``.

    With ``filtered`` on, candidates ``e != t`` such that ``(h, q, e)`` is in
    any filter set are removed before ranking.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}")
    queries = [tuple(int(x) for x in tr) for tr in test_triples]
    if not queries:
        raise ValueError("no test triples to evaluate")
    n_e, n_r = g_inference.num_entities, g_inference.num_relations
    for h, q, t in queries:
        if not (0 <= h < n_e and 0 <= t < n_e and 0 <= q < n_r):
            raise ValueError(f"test triple {(h, q, t)} is outside the inference graph's id space")
    known: dict[tuple[int, int], set[int]] = defaultdict(set)
    if filtered:
        for fs in filter_sets:
            for h, q, t in fs:
                known[(h, q)].add(t)

    def rank_one(query):
        h, q, t = query
        scores = np.asarray(score_tails(h, q), dtype=np.float64)
        if scores.shape != (n_e,):
            raise ValueError(f"scorer returned shape {scores.shape}, expected ({n_e},)")
        keep = None
        if filtered and known.get((h, q)):
            keep = np.ones(n_e, dtype=bool)
            keep[list(known[(h, q)])] = False
        return mid_rank(scores, t, keep)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            ranks = list(pool.map(rank_one, queries))
    else:
        ranks = [rank_one(q) for q in queries]
    r = np.array(ranks)
    return EvalReport(
        mrr=float(np.mean(1.0 / r)),
        hits={n: float(np.mean(r <= n)) for n in HITS_AT},
        num_queries=len(ranks),
        setting=setting,
        filtered=filtered,
        config_hash=config_hash,
        ranks=tuple(ranks),
    )


def split_inductive(
    g: KnowledgeGraph,
    mode: str,
    train_fraction: float = 0.5,
    test_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[KnowledgeGraph, KnowledgeGraph, list[tuple[int, int, int]]]:
    """Partition entities into a training and an inference side.

    Triples internal to each side form the two graphs; cross triples are
    dropped. ``ind_e`` keeps relation names, ``ind_er`` renames the inference
    side's relations so the two name sets are disjoint. Test triples are a
    ``test_fraction`` share of the inference side, removed from its graph.
    """
    if mode not in ("ind_e", "ind_er"):
        raise ValueError(f"unknown inductive mode {mode!r}")
    if not 0.0 < train_fraction < 1.0 or not 0.0 <= test_fraction < 1.0:
        raise ValueError("fractions must satisfy 0 < train < 1 and 0 <= test < 1")
    if g.inverse_augmented:
        raise ValueError("split the graph before inverse augmentation")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.num_entities)
    cut = int(round(train_fraction * g.num_entities))
    side = np.zeros(g.num_entities, dtype=bool)
    side[perm[:cut]] = True
    train_rows = [tr for tr in g.named_triples() if side[g.entity_id(tr[0])] and side[g.entity_id(tr[2])]]
    inf_rows = [tr for tr in g.named_triples() if not side[g.entity_id(tr[0])] and not side[g.entity_id(tr[2])]]
    if not train_rows or not inf_rows:
        raise ValueError("graph too small: one side of the split has no internal triples")
    if mode == "ind_er":
        inf_rows = [(h, f"{r}#inf", t) for h, r, t in inf_rows]
    n_test = int(round(test_fraction * len(inf_rows)))
    if n_test >= len(inf_rows):
        raise ValueError("graph too small: test split would empty the inference graph")
    test_ix = set(rng.choice(len(inf_rows), size=n_test, replace=False).tolist())
    train = KnowledgeGraph.from_named_triples(train_rows)
    if mode == "ind_e":
        relation_names = list(g.relation_names)
        inf_entities = sorted({x for h, _, t in inf_rows for x in (h, t)}, key=g.entity_id)
        eix = {name: i for i, name in enumerate(inf_entities)}
        rix = {name: i for i, name in enumerate(relation_names)}
        train_entities = sorted({x for h, _, t in train_rows for x in (h, t)}, key=g.entity_id)
        tix = {name: i for i, name in enumerate(train_entities)}
        train = KnowledgeGraph(train_entities, relation_names,
                               [(tix[h], rix[r], tix[t]) for h, r, t in train_rows])
        all_inf = [(eix[h], rix[r], eix[t]) for h, r, t in inf_rows]
        inference = KnowledgeGraph(inf_entities, relation_names,
                                   [tr for i, tr in enumerate(all_inf) if i not in test_ix])
    else:
        full = KnowledgeGraph.from_named_triples(inf_rows)
        all_inf = list(full.triples)
        inference = KnowledgeGraph(full.entity_names, full.relation_names,
                                   [tr for i, tr in enumerate(all_inf) if i not in test_ix])
    test = [all_inf[i] for i in sorted(test_ix)]
    return train, inference, test
