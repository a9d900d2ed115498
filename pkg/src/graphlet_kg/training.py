"""Training loop: negative sampling, BCE loss and AdamW."""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .kg import KnowledgeGraph
from .model import (
    ModelConfig,
    Parameters,
    _EntityView,
    _RelationView,
    _entity_forward,
    _relation_forward,
    _score_head,
    bce_loss,
    init_parameters,
    self_adversarial_weights,
)
from .relation_graph import RelationGraph

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Parameters, lr: float, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params, self.lr, self.weight_decay = params, lr, weight_decay
        self.b1, self.b2, self.eps = betas[0], betas[1], eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self) -> None:
        self.t += 1
        c1, c2 = 1 - self.b1 ** self.t, 1 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * p.grad
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * p.grad * p.grad
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p.data = p.data - self.lr * (update + self.weight_decay * p.data)


@dataclass
class TrainResult:
    params: Parameters
    losses: list[float] = field(default_factory=list)
    steps: int = 0


def _true_tails(g: KnowledgeGraph) -> dict[tuple[int, int], set[int]]:
    out: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in g.triples:
        out[(h, r)].add(t)
    return out


def _sample_negatives(rng: np.random.Generator, n_entities: int, exclude: set[int], k: int) -> np.ndarray | None:
    candidates = np.setdiff1d(np.arange(n_entities), np.fromiter(exclude, dtype=np.int64))
    if candidates.size == 0:
        return None
    return rng.choice(candidates, size=k, replace=True)


def batch_loss(
    g: KnowledgeGraph,
    rg: RelationGraph,
    params: Parameters,
    cfg: ModelConfig,
    batch: Sequence[tuple[int, int, int]],
    negatives: Sequence[np.ndarray],
    views: tuple[_RelationView, _EntityView] | None = None,
):
    """Differentiable BCE over ``batch`` with the given negative tails."""
    rel_view, ent_view = views or (_RelationView.of(rg), _EntityView.of(g))
    rel_cache = {}
    pos_rows, neg_rows = [], []
    for (h, q, t), negs in zip(batch, negatives):
        if q not in rel_cache:
            rel_cache[q] = _relation_forward(rel_view, q, params, cfg)
        drop = []
        if cfg.remove_target_edges:
            drop = [ent_view.index[tr] for tr in _target_and_inverse(g, h, q, t) if tr in ent_view.index]
        x = _entity_forward(ent_view, rel_cache[q], q, h, params, cfg, drop)
        scores = _score_head(x, params)
        pos_rows.append(ad.take_rows(scores, np.array([t])))
        neg_rows.append(ad.reshape(ad.take_rows(scores, negs), (1, len(negs))))
    pos, neg = ad.concat(pos_rows, axis=0), ad.concat(neg_rows, axis=0)
    weights = None
    if cfg.adversarial:
        weights = self_adversarial_weights(neg.data, cfg.adversarial_temperature)
    return bce_loss(pos, neg, weights)


def _target_and_inverse(g: KnowledgeGraph, h: int, q: int, t: int) -> list[tuple[int, int, int]]:
    out = [(h, q, t)]
    if g.inverse_augmented:
        out.append((t, g.inverse_of(q), h))
    return out


def train(
    g: KnowledgeGraph,
    rg: RelationGraph,
    cfg: ModelConfig,
    params: Parameters | None = None,
    metrics_path: str | Path | None = None,
    on_step: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Fit parameters on ``g`` for ``cfg.steps`` steps.

    A single generator seeded with ``cfg.seed`` drives initialisation and
    sampling, so equal inputs give bitwise-equal parameters. Raises
    :class:`TrainingDiverged` on a non-finite loss or parameter.
    """
    if not g.triples:
        raise ValueError("training graph has no triples")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_parameters(cfg, len(rg.edge_types), rng)
    opt = AdamW(params, cfg.learning_rate, cfg.weight_decay)
    views = (_RelationView.of(rg), _EntityView.of(g))
    tails = _true_tails(g)
    triples = list(g.triples)
    result = TrainResult(params)
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for step in range(cfg.steps):
            picks = rng.integers(0, len(triples), size=cfg.batch_size)
            batch, negs = [], []
            for i in picks:
                h, q, t = triples[i]
                sample = _sample_negatives(rng, g.num_entities, tails[(h, q)], cfg.num_negatives)
                if sample is not None:
                    batch.append((h, q, t))
                    negs.append(sample)
            if not batch:
                continue
            params.zero_grad()
            loss = batch_loss(g, rg, params, cfg, batch, negs, views)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at step {step}; "
                                       f"lr={cfg.learning_rate} batch={batch[:4]}")
            loss.backward()
            opt.step()
            if not params.all_finite():
                bad = [k for k, v in params.items() if not np.isfinite(v.data).all()]
                raise TrainingDiverged(f"non-finite parameters {bad} after step {step}")
            result.losses.append(value)
            result.steps = step + 1
            if sink:
                sink.write(json.dumps({"step": step, "loss": value, "batch": len(batch)}) + "\n")
            if on_step:
                on_step(step, value)
            if step % 50 == 0:
                log.debug("step %d loss %.5f", step, value)
    finally:
        if sink:
            sink.close()
    return result
