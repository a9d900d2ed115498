"""Relation graphs: KG relations as nodes, graphlet classes as typed weighted edges."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .kg import KnowledgeGraph
from .matcher import mine
from .vocabulary import Vocabulary, canonical_pattern_name


@dataclass(frozen=True, order=True)
class RelationEdge:
    type: str
    src: int
    dst: int
    weight: int


@dataclass(frozen=True)
class RelationGraph:
    """Typed edges ``type: src -> dst`` between relation nodes.

    ``src`` is the relation bound to the pattern's first anchored slot and
    ``dst`` the one bound to the last. Every relation of the source graph is a
    node, isolated or not.
    """

    nodes: tuple[str, ...]
    edge_types: tuple[str, ...]
    edges: tuple[RelationEdge, ...]
    epsilon: int = 1
    metadata: dict = field(default_factory=dict, compare=False)
    _inbound: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.epsilon < 1:
            raise ValueError("epsilon must be >= 1")
        types = set(self.edge_types)
        n = len(self.nodes)
        inbound = defaultdict(set)
        for e in self.edges:
            if e.type not in types:
                raise ValueError(f"edge type {e.type!r} not declared")
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ValueError(f"edge {e} references an unknown node")
            if e.weight < self.epsilon:
                raise ValueError(f"edge {e} is below epsilon={self.epsilon}")
            inbound[(e.type, e.dst)].add(e.src)
        object.__setattr__(self, "_inbound", {k: frozenset(v) for k, v in inbound.items()})

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(src, dst, type_index)`` integer arrays for message passing."""
        type_ix = {t: i for i, t in enumerate(self.edge_types)}
        src = np.array([e.src for e in self.edges], dtype=np.int64)
        dst = np.array([e.dst for e in self.edges], dtype=np.int64)
        typ = np.array([type_ix[e.type] for e in self.edges], dtype=np.int64)
        return src, dst, typ

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edge_types": list(self.edge_types),
            "edges": [{"type": e.type, "src": e.src, "dst": e.dst, "w": e.weight} for e in self.edges],
            "epsilon": self.epsilon,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RelationGraph":
        edges = tuple(RelationEdge(e["type"], int(e["src"]), int(e["dst"]), int(e["w"])) for e in data["edges"])
        return cls(tuple(data["nodes"]), tuple(data["edge_types"]), edges, int(data["epsilon"]),
                   dict(data.get("metadata", {})))


def _sorted_edges(edges, edge_types: Sequence[str]) -> tuple[RelationEdge, ...]:
    order = {t: i for i, t in enumerate(edge_types)}
    return tuple(sorted(edges, key=lambda e: (order[e.type], e.src, e.dst)))


def build(
    g: KnowledgeGraph,
    v: Vocabulary,
    epsilon: int = 1,
    injective: bool = True,
    workers: int = 1,
) -> RelationGraph:
    """Mine ``g`` with ``v`` and keep classes of weight at least ``epsilon``."""
    if epsilon < 1:
        raise ValueError("epsilon must be >= 1")
    edges = [
        RelationEdge(c.pattern, c.r1, c.r2, c.weight)
        for c in mine(g, v, injective=injective, workers=workers)
        if c.weight >= epsilon
    ]
    metadata = {
        "vocabulary": v.name,
        "mode": v.mode,
        "injective": injective,
        "inverse_augmented": g.inverse_augmented,
    }
    return RelationGraph(g.relation_names, v.pattern_names, _sorted_edges(edges, v.pattern_names),
                         epsilon, metadata)


def meta_neighborhood(rg: RelationGraph, pattern: str, r: int) -> frozenset[int]:
    """Sources of ``pattern``-typed edges into ``r``; empty for unknown patterns."""
    return rg._inbound.get((canonical_pattern_name(pattern), r), frozenset())


def export(rg: RelationGraph, path: str | Path, format: str = "json") -> None:
    path = Path(path)
    if format == "json":
        path.write_text(json.dumps(rg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    elif format == "tsv":
        lines = [f"#epsilon\t{rg.epsilon}"]
        lines += [f"#meta\t{k}\t{json.dumps(val)}" for k, val in sorted(rg.metadata.items())]
        lines += [f"#node\t{name}" for name in rg.nodes]
        lines += [f"#type\t{name}" for name in rg.edge_types]
        lines += [f"{e.type}\t{rg.nodes[e.src]}\t{rg.nodes[e.dst]}\t{e.weight}" for e in rg.edges]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown relation graph format {format!r}")


def load(path: str | Path, format: str | None = None) -> RelationGraph:
    path = Path(path)
    if format is None:
        format = "tsv" if path.suffix.lower() == ".tsv" else "json"
    text = path.read_text(encoding="utf-8")
    if format == "json":
        return RelationGraph.from_dict(json.loads(text))
    if format != "tsv":
        raise ValueError(f"unknown relation graph format {format!r}")
    epsilon, metadata, nodes, types, rows = 1, {}, [], [], []
    for line in text.splitlines():
        if not line:
            continue
        parts = line.split("\t")
        if parts[0] == "#epsilon":
            epsilon = int(parts[1])
        elif parts[0] == "#meta":
            metadata[parts[1]] = json.loads(parts[2])
        elif parts[0] == "#node":
            nodes.append(parts[1])
        elif parts[0] == "#type":
            types.append(parts[1])
        else:
            rows.append(parts)
    ix = {name: i for i, name in enumerate(nodes)}
    edges = tuple(RelationEdge(t, ix[s], ix[d], int(w)) for t, s, d, w in rows)
    return RelationGraph(tuple(nodes), tuple(types), edges, epsilon, metadata)
