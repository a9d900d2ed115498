"""Small synthetic graphs for smoke training and property tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kg import KnowledgeGraph


@dataclass(frozen=True)
class FamilySplit:
    train: KnowledgeGraph
    test: list[tuple[int, int, int]]


def family_kg(num_families: int = 4, test_fraction: float = 0.25, seed: int = 0) -> FamilySplit:
    """Three-generation families under two rules.

    ``grandparent = parent . parent`` and ``sibling = parent^-1 . parent``.
    Each family has one grandparent, two parents and four grandchildren,
    giving 16 triples per family. A ``test_fraction`` share of the derived
    (grandparent and sibling) triples is held out; every parent triple stays
    in training so the rules remain observable.
    """
    rng = np.random.default_rng(seed)
    named: list[tuple[str, str, str]] = []
    derived: list[int] = []
    for f in range(num_families):
        gp, parents = f"f{f}_g", [f"f{f}_p{i}" for i in range(2)]
        kids = {p: [f"{p}_c{j}" for j in range(2)] for p in parents}
        for p in parents:
            named.append((gp, "parent", p))
            for c in kids[p]:
                named.append((p, "parent", c))
                derived.append(len(named))
                named.append((gp, "grandparent", c))
        groups = [parents] + [kids[p] for p in parents]
        for group in groups:
            for a in group:
                for b in group:
                    if a != b:
                        derived.append(len(named))
                        named.append((a, "sibling", b))
    full = KnowledgeGraph.from_named_triples(named)
    n_test = int(round(test_fraction * len(derived)))
    held = set(rng.choice(derived, size=n_test, replace=False).tolist())
    train_triples = [tr for i, tr in enumerate(full.triples) if i not in held]
    test = [full.triples[i] for i in sorted(held)]
    train = KnowledgeGraph(full.entity_names, full.relation_names, train_triples)
    return FamilySplit(train, test)


def random_kg(rng: np.random.Generator, max_entities: int = 8, max_relations: int = 5,
              max_triples: int = 14, self_loops: bool = True) -> KnowledgeGraph:
    """Random small graph over ids; every entity and relation is declared even if unused."""
    n_e = int(rng.integers(2, max_entities + 1))
    n_r = int(rng.integers(1, max_relations + 1))
    m = int(rng.integers(1, max_triples + 1))
    triples = []
    for _ in range(m):
        h, t = (int(x) for x in rng.integers(0, n_e, size=2))
        if h == t and not self_loops:
            continue
        triples.append((h, int(rng.integers(0, n_r)), t))
    return KnowledgeGraph([f"e{i}" for i in range(n_e)], [f"r{i}" for i in range(n_r)], triples)
