"""Conditional two-level message passing for zero-shot link prediction.

The relation level runs over a :class:`~graphlet_kg.relation_graph.RelationGraph`
starting from an all-ones row for the query relation; the entity level runs
over the knowledge graph starting from that row at the query head. Nothing in
the parameter set is tied to a particular entity or relation id, which is
what lets a trained model score unseen graphs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kg import KnowledgeGraph
from .relation_graph import RelationGraph

CHECKPOINT_FORMAT = "graphlet-kg-checkpoint"
CHECKPOINT_VERSION = 1

PER_RELATION_ROW = "per_relation_row"
QUERY_ROW = "query_row"


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    relation_layers: int = 6
    entity_layers: int = 6
    num_negatives: int = 32
    adversarial_temperature: float = 1.0
    adversarial: bool = False
    learning_rate: float = 5e-4
    weight_decay: float = 0.0
    batch_size: int = 8
    steps: int = 500
    seed: int = 0
    message_kind: str = "elementwise_product"
    norm_kind: str = "layer_normalization"
    entity_message: str = PER_RELATION_ROW
    remove_target_edges: bool = True

    def __post_init__(self):
        if min(self.dim, self.relation_layers, self.entity_layers) < 1:
            raise ValueError("dim and layer counts must be >= 1")
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.message_kind != "elementwise_product":
            raise ValueError(f"unsupported message kind {self.message_kind!r}")
        if self.norm_kind != "layer_normalization":
            raise ValueError(f"unsupported normalisation {self.norm_kind!r}")
        if self.entity_message not in (PER_RELATION_ROW, QUERY_ROW):
            raise ValueError(f"unknown entity message mode {self.entity_message!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


class Parameters:
    """Ordered mapping of named trainable tensors.

    Groups: ``rel.{t}.meta`` (one row per edge type), ``rel.{t}.{W,b,gain,shift}``,
    ``ent.{t}.{W1,b1,W2,b2}`` (the per-layer relation transform),
    ``ent.{t}.{W,b,gain,shift}`` and ``head.{W,b,w,c}``.
    """

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "Parameters":
        return Parameters({k: Tensor(v.data.copy(), True) for k, v in self.tensors.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.tensors.items()}

    def all_finite(self) -> bool:
        return all(np.isfinite(v.data).all() for v in self.tensors.values())


def init_parameters(cfg: ModelConfig, num_edge_types: int, rng: np.random.Generator | int | None = None,
                    random_biases: bool = False) -> Parameters:
    """Fan-in scaled normal weights, unit gains, zero biases.

    ``random_biases`` draws biases, gains and shifts from a continuous
    distribution as well, which the expressiveness checks rely on.
    """
    rng = np.random.default_rng(rng if rng is not None else cfg.seed)
    d = cfg.dim
    out: dict[str, np.ndarray] = {}

    def weight(n_in, n_out):
        return rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))

    def vector(base: float):
        return base + rng.normal(0.0, 0.5, size=d) if random_biases else np.full(d, base)

    for t in range(cfg.relation_layers):
        out[f"rel.{t}.meta"] = rng.normal(0.0, 1.0, size=(num_edge_types, d))
        out[f"rel.{t}.W"] = weight(2 * d, d)
        out[f"rel.{t}.b"] = vector(0.0)
        out[f"rel.{t}.gain"] = vector(1.0)
        out[f"rel.{t}.shift"] = vector(0.0)
    for t in range(cfg.entity_layers):
        out[f"ent.{t}.W1"] = weight(d, d)
        out[f"ent.{t}.b1"] = vector(0.0)
        out[f"ent.{t}.W2"] = weight(d, d)
        out[f"ent.{t}.b2"] = vector(0.0)
        out[f"ent.{t}.W"] = weight(2 * d, d)
        out[f"ent.{t}.b"] = vector(0.0)
        out[f"ent.{t}.gain"] = vector(1.0)
        out[f"ent.{t}.shift"] = vector(0.0)
    out["head.W"] = weight(d, d)
    out["head.b"] = vector(0.0)
    out["head.w"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=d)
    out["head.c"] = rng.normal(0.0, 0.5, size=1) if random_biases else np.zeros(1)
    return Parameters({k: Tensor(v, True) for k, v in out.items()})


# graph views ----------------------------------------------------------

@dataclass(frozen=True)
class _RelationView:
    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    typ: np.ndarray
    num_types: int

    @classmethod
    def of(cls, rg: RelationGraph) -> "_RelationView":
        src, dst, typ = rg.edge_arrays()
        return cls(rg.num_nodes, src, dst, typ, len(rg.edge_types))


@dataclass(frozen=True)
class _EntityView:
    num_entities: int
    num_relations: int
    heads: np.ndarray
    rels: np.ndarray
    tails: np.ndarray
    index: dict = field(compare=False)

    @classmethod
    def of(cls, g: KnowledgeGraph) -> "_EntityView":
        arr = np.array(g.triples, dtype=np.int64).reshape(-1, 3)
        index = {tuple(tr): i for i, tr in enumerate(g.triples)}
        return cls(g.num_entities, g.num_relations, arr[:, 0], arr[:, 1], arr[:, 2], index)

    def without(self, drop: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not len(drop):
            return self.heads, self.rels, self.tails
        keep = np.ones(len(self.heads), dtype=bool)
        keep[list(drop)] = False
        return self.heads[keep], self.rels[keep], self.tails[keep]


# forward passes ---------------------------------------------------------

def _update(prev: Tensor, agg: Tensor, params: Parameters, prefix: str) -> Tensor:
    lin = ad.concat([prev, agg], axis=-1) @ params[f"{prefix}.W"] + params[f"{prefix}.b"]
    return ad.layer_norm(lin, params[f"{prefix}.gain"], params[f"{prefix}.shift"])


def _relation_forward(view: _RelationView, q: int, params: Parameters, cfg: ModelConfig,
                      trace: list | None = None) -> Tensor:
    if not 0 <= q < view.num_nodes:
        raise ValueError(f"query relation {q} is not a node of the relation graph")
    h0 = np.zeros((view.num_nodes, cfg.dim))
    h0[q] = 1.0
    h = Tensor(h0)
    if trace is not None:
        trace.append({"embedding": h.data.copy()})
    for t in range(cfg.relation_layers):
        meta = params[f"rel.{t}.meta"]
        if meta.shape[0] != view.num_types:
            raise ValueError(f"parameters carry {meta.shape[0]} edge types, relation graph has {view.num_types}")
        msg = ad.take_rows(h, view.src) * ad.take_rows(meta, view.typ)
        agg = ad.scatter_add(msg, view.dst, view.num_nodes)
        h = _update(h, agg, params, f"rel.{t}")
        if trace is not None:
            trace.append({"aggregate": agg.data.copy(), "embedding": h.data.copy()})
    return h


def _relation_transform(x: Tensor, params: Parameters, t: int) -> Tensor:
    hidden = ad.relu(x @ params[f"ent.{t}.W1"] + params[f"ent.{t}.b1"])
    return hidden @ params[f"ent.{t}.W2"] + params[f"ent.{t}.b2"]


def _entity_forward(view: _EntityView, rel_emb: Tensor, q: int, h: int, params: Parameters,
                    cfg: ModelConfig, drop: Sequence[int] = ()) -> Tensor:
    if not 0 <= h < view.num_entities:
        raise ValueError(f"head entity {h} out of range")
    if rel_emb.shape[0] != view.num_relations:
        raise ValueError("relation embedding rows do not match the graph's relations")
    heads, rels, tails = view.without(drop)
    query_vec = ad.take_rows(rel_emb, np.array([q]))
    x = ad.scatter_add(query_vec, np.array([h]), view.num_entities)
    for t in range(cfg.entity_layers):
        if cfg.entity_message == PER_RELATION_ROW:
            rel_vecs = ad.take_rows(_relation_transform(rel_emb, params, t), rels)
        else:
            rel_vecs = _relation_transform(query_vec, params, t)
        msg = ad.take_rows(x, heads) * rel_vecs
        agg = ad.scatter_add(msg, tails, view.num_entities)
        x = _update(x, agg, params, f"ent.{t}")
    return x


def _score_head(x: Tensor, params: Parameters) -> Tensor:
    return (x @ params["head.W"] + params["head.b"]) @ params["head.w"] + params["head.c"]


@dataclass(frozen=True)
class ConditionalRelationEmbedding:
    matrix: np.ndarray
    query: int
    layers: tuple[np.ndarray, ...] = ()
    aggregates: tuple[np.ndarray, ...] = ()


def encode_relations(rg: RelationGraph, q: int, params: Parameters, cfg: ModelConfig) -> ConditionalRelationEmbedding:
    """Relation embeddings conditioned on query relation ``q``, with per-layer traces."""
    trace: list = []
    with ad.no_grad():
        out = _relation_forward(_RelationView.of(rg), q, params, cfg, trace)
    layers = tuple(step["embedding"] for step in trace)
    aggregates = tuple(step["aggregate"] for step in trace[1:])
    return ConditionalRelationEmbedding(out.data, q, layers, aggregates)


def encode_entities(g: KnowledgeGraph, rel_emb: ConditionalRelationEmbedding | np.ndarray, q: int, h: int,
                    params: Parameters, cfg: ModelConfig) -> np.ndarray:
    """Entity embeddings conditioned on the query ``q(h, ?)``."""
    matrix = rel_emb.matrix if isinstance(rel_emb, ConditionalRelationEmbedding) else rel_emb
    with ad.no_grad():
        return _entity_forward(_EntityView.of(g), Tensor(matrix), q, h, params, cfg).data


def score(g: KnowledgeGraph, rg: RelationGraph, params: Parameters, cfg: ModelConfig,
          query: tuple[int, int, int]) -> float:
    """Logit of ``q(h, e)`` for ``query = (h, q, e)``."""
    h, q, e = query
    return float(GraphScorer(g, rg, params, cfg).score_tails(h, q)[e])


class GraphScorer:
    """Scores every candidate tail of ``q(h, ?)`` on one graph; caches relation embeddings."""

    def __init__(self, g: KnowledgeGraph, rg: RelationGraph, params: Parameters, cfg: ModelConfig):
        if rg.num_nodes != g.num_relations:
            raise ValueError("relation graph nodes must be the graph's relations")
        self.g, self.rg, self.params, self.cfg = g, rg, params, cfg
        self._rel_view = _RelationView.of(rg)
        self._ent_view = _EntityView.of(g)
        self._rel_cache: dict[int, Tensor] = {}

    def relation_embedding(self, q: int) -> Tensor:
        if q not in self._rel_cache:
            with ad.no_grad():
                self._rel_cache[q] = _relation_forward(self._rel_view, q, self.params, self.cfg)
        return self._rel_cache[q]

    def score_tails(self, h: int, q: int) -> np.ndarray:
        with ad.no_grad():
            x = _entity_forward(self._ent_view, self.relation_embedding(q), q, h, self.params, self.cfg)
            return _score_head(x, self.params).data


# loss -------------------------------------------------------------------

def bce_loss(pos_logits, neg_logits, neg_weights: np.ndarray | None = None) -> Tensor:
    """Binary cross-entropy over logits.

    ``pos_logits`` has shape ``(B,)`` and ``neg_logits`` ``(B, n)``. Each
    positive contributes ``-log p`` plus the mean (or ``neg_weights``-weighted
    sum) of ``-log(1 - p')`` over its negatives; the result is averaged over
    positives.
    """
    pos, neg = ad.as_tensor(pos_logits), ad.as_tensor(neg_logits)
    if pos.data.ndim != 1 or pos.shape[0] == 0:
        raise ValueError("bce_loss needs at least one positive")
    if neg.data.ndim != 2 or neg.shape[0] != pos.shape[0] or neg.shape[1] == 0:
        raise ValueError("every positive needs at least one negative")
    pos_term = ad.softplus(ad.mul(pos, -1.0))
    neg_term = ad.softplus(neg)
    if neg_weights is None:
        neg_sum = ad.reduce_mean(neg_term, axis=1)
    else:
        neg_sum = ad.reduce_sum(ad.mul(neg_term, np.asarray(neg_weights, dtype=np.float64)), axis=1)
    return ad.reduce_mean(ad.add(pos_term, neg_sum))


def self_adversarial_weights(neg_logits: np.ndarray, temperature: float) -> np.ndarray:
    z = neg_logits * temperature
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=1, keepdims=True)


# ternary hypergraph baseline -------------------------------------------

def motif_baseline_encode(
    hyperedges: Iterable[tuple[int, ...]],
    num_relations: int,
    q: int,
    params: Parameters,
    cfg: ModelConfig,
    edge_type: int = 0,
) -> list[np.ndarray]:
    """Relation embeddings over a hypergraph with one shared meta-embedding per layer.

    Each hyperedge sends every member the sum of its other members'
    embeddings times ``rel.{t}.meta[edge_type]``. Rows are updated one at a
    time with identical arithmetic, so equal inputs give bitwise-equal rows.
    Returns the embedding after every layer, layer 0 included.
    """
    members = sorted(tuple(e) for e in hyperedges)
    d = cfg.dim
    h = np.zeros((num_relations, d))
    h[q] = 1.0
    layers = [h.copy()]
    for t in range(cfg.relation_layers):
        meta = params[f"rel.{t}.meta"].data[edge_type]
        W, b = params[f"rel.{t}.W"].data, params[f"rel.{t}.b"].data
        gain, shift = params[f"rel.{t}.gain"].data, params[f"rel.{t}.shift"].data
        agg = np.zeros((num_relations, d))
        for edge in members:
            for pos, r in enumerate(edge):
                others = np.zeros(d)
                for other_pos, r_other in enumerate(edge):
                    if other_pos != pos:
                        others = others + h[r_other]
                agg[r] = agg[r] + others * meta
        new = np.empty_like(h)
        for r in range(num_relations):
            lin = np.concatenate([h[r], agg[r]]) @ W + b
            mu = lin.mean()
            xc = lin - mu
            new[r] = xc / np.sqrt((xc * xc).mean() + 1e-5) * gain + shift
        h = new
        layers.append(h.copy())
    return layers


# checkpoints --------------------------------------------------------------

@dataclass
class Checkpoint:
    config: ModelConfig
    params: Parameters
    vocabulary: dict
    graph_options: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": ckpt.config.to_dict(),
        "vocabulary": ckpt.vocabulary,
        "graph_options": ckpt.graph_options,
        "run": ckpt.run,
        "params": {k: {"shape": list(v.shape), "data": v.data.ravel().tolist()} for k, v in ckpt.params.items()},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, expect_vocabulary: Sequence[str] | None = None) -> Checkpoint:
    """Read a checkpoint; refuses one whose vocabulary differs from ``expect_vocabulary``."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    vocab = payload["vocabulary"]
    if expect_vocabulary is not None and list(expect_vocabulary) != list(vocab["patterns"]):
        raise ValueError(
            f"checkpoint vocabulary {vocab['name']} {vocab['patterns']} does not match {list(expect_vocabulary)}"
        )
    params = Parameters({
        k: Tensor(np.array(v["data"], dtype=np.float64).reshape(v["shape"]), True)
        for k, v in payload["params"].items()
    })
    return Checkpoint(ModelConfig.from_dict(payload["config"]), params, vocab,
                      payload.get("graph_options", {}), payload.get("run", {}))
