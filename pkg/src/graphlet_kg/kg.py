"""In-memory knowledge graphs with interned ids and join indexes."""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

logger = logging.getLogger(__name__)

INVERSE_SUFFIX = "^-1"


class ParseError(ValueError):
    """Raised for malformed triple files; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class KnowledgeGraph:
    """Immutable set of ``relation(head, tail)`` triples over dense integer ids.

    Entities and relations are numbered from 0 in order of first appearance.
    When ``inverse_augmented`` is set, relation ``2k + 1`` is the symbolic
    inverse of relation ``2k``.
    """

    __slots__ = (
        "entity_names",
        "relation_names",
        "triples",
        "inverse_augmented",
        "duplicates",
        "_triple_set",
        "_by_relation",
        "_by_rel_head",
        "_by_rel_tail",
        "_out",
        "_in",
        "_pair_rels",
        "_entity_index",
        "_relation_index",
    )

    def __init__(
        self,
        entity_names: Sequence[str],
        relation_names: Sequence[str],
        triples: Iterable[tuple[int, int, int]],
        inverse_augmented: bool = False,
        duplicates: int = 0,
    ):
        self.entity_names = tuple(entity_names)
        self.relation_names = tuple(relation_names)
        if len(set(self.entity_names)) != len(self.entity_names):
            raise ValueError("entity names must be unique")
        if len(set(self.relation_names)) != len(self.relation_names):
            raise ValueError("relation names must be unique")
        if inverse_augmented and len(self.relation_names) % 2:
            raise ValueError("an inverse-augmented graph needs an even relation count")
        self.inverse_augmented = inverse_augmented

        n_ent, n_rel = len(self.entity_names), len(self.relation_names)
        seen: set[Triple] = set()
        ordered: list[Triple] = []
        for h, r, t in triples:
            tr = Triple(int(h), int(r), int(t))
            if not (0 <= tr.head < n_ent and 0 <= tr.tail < n_ent and 0 <= tr.relation < n_rel):
                raise ValueError(f"triple {tuple(tr)} references unknown ids")
            if tr in seen:
                duplicates += 1
                continue
            seen.add(tr)
            ordered.append(tr)
        self.triples: tuple[Triple, ...] = tuple(ordered)
        self.duplicates = duplicates
        self._triple_set = frozenset(seen)

        by_relation = defaultdict(list)
        by_rel_head = defaultdict(list)
        by_rel_tail = defaultdict(list)
        out_edges = defaultdict(list)
        in_edges = defaultdict(list)
        pair_rels = defaultdict(list)
        for h, r, t in self.triples:
            by_relation[r].append((h, t))
            by_rel_head[(r, h)].append(t)
            by_rel_tail[(r, t)].append(h)
            out_edges[h].append((r, t))
            in_edges[t].append((r, h))
            pair_rels[(h, t)].append(r)
        freeze = lambda d: {k: tuple(v) for k, v in d.items()}  # noqa: E731
        self._by_relation = freeze(by_relation)
        self._by_rel_head = freeze(by_rel_head)
        self._by_rel_tail = freeze(by_rel_tail)
        self._out = freeze(out_edges)
        self._in = freeze(in_edges)
        self._pair_rels = freeze(pair_rels)
        self._entity_index = {name: i for i, name in enumerate(self.entity_names)}
        self._relation_index = {name: i for i, name in enumerate(self.relation_names)}

    # construction -------------------------------------------------------

    @classmethod
    def from_named_triples(cls, rows: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Intern ``(head, relation, tail)`` name rows in first-appearance order."""
        entities: dict[str, int] = {}
        relations: dict[str, int] = {}
        triples = []
        for h, r, t in rows:
            hi = entities.setdefault(h, len(entities))
            ri = relations.setdefault(r, len(relations))
            ti = entities.setdefault(t, len(entities))
            triples.append((hi, ri, ti))
        return cls(list(entities), list(relations), triples)

    # sizes and lookups --------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple) -> bool:
        return tuple(triple) in self._triple_set

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.entity_names == other.entity_names
            and self.relation_names == other.relation_names
            and self._triple_set == other._triple_set
            and self.inverse_augmented == other.inverse_augmented
        )

    def __hash__(self) -> int:
        return hash((self.entity_names, self.relation_names, self._triple_set))

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(entities={self.num_entities}, relations={self.num_relations}, "
            f"triples={len(self)}, inverse_augmented={self.inverse_augmented})"
        )

    def entity_id(self, name: str) -> int:
        return self._entity_index[name]

    def relation_id(self, name: str) -> int:
        return self._relation_index[name]

    def has_entity(self, name: str) -> bool:
        return name in self._entity_index

    def has_relation(self, name: str) -> bool:
        return name in self._relation_index

    def named_triples(self) -> list[tuple[str, str, str]]:
        e, r = self.entity_names, self.relation_names
        return [(e[h], r[rel], e[t]) for h, rel, t in self.triples]

    # indexes ------------------------------------------------------------

    def edges_of(self, relation: int) -> tuple[tuple[int, int], ...]:
        """``(head, tail)`` pairs of one relation."""
        return self._by_relation.get(relation, ())

    def tails(self, relation: int, head: int) -> tuple[int, ...]:
        return self._by_rel_head.get((relation, head), ())

    def heads(self, relation: int, tail: int) -> tuple[int, ...]:
        return self._by_rel_tail.get((relation, tail), ())

    def out_edges(self, entity: int) -> tuple[tuple[int, int], ...]:
        """``(relation, tail)`` pairs leaving ``entity``."""
        return self._out.get(entity, ())

    def in_edges(self, entity: int) -> tuple[tuple[int, int], ...]:
        """``(relation, head)`` pairs entering ``entity``."""
        return self._in.get(entity, ())

    def relations_between(self, head: int, tail: int) -> tuple[int, ...]:
        return self._pair_rels.get((head, tail), ())

    def inverse_of(self, relation: int) -> int:
        if not self.inverse_augmented:
            raise ValueError("graph is not inverse-augmented")
        return relation ^ 1

    def stats(self) -> dict:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "triples": len(self),
            "inverse_augmented": self.inverse_augmented,
        }


@dataclass(frozen=True)
class Monomorphism:
    """Entity map and relation map between two graphs."""

    entity_map: Mapping[int, int]
    relation_map: Mapping[int, int]


def neighborhood(g: KnowledgeGraph, r: int, t: int) -> frozenset[int]:
    """Heads ``h`` with ``r(h, t)`` in ``g``."""
    return frozenset(g.heads(r, t))


def augment_inverses(g: KnowledgeGraph) -> KnowledgeGraph:
    """Add ``r'(t, h)`` for every ``r(h, t)``; relation ``k`` becomes ``2k``, its inverse ``2k+1``."""
    if g.inverse_augmented:
        raise ValueError("graph is already inverse-augmented")
    names = []
    for name in g.relation_names:
        names.extend([name, name + INVERSE_SUFFIX])
    if len(set(names)) != len(names):
        raise ValueError(f"relation names clash with generated '{INVERSE_SUFFIX}' inverse names")
    forward = [(h, 2 * r, t) for h, r, t in g.triples]
    backward = [(t, 2 * r + 1, h) for h, r, t in g.triples]
    return KnowledgeGraph(g.entity_names, names, forward + backward, True, g.duplicates)


def drop_inverses(g: KnowledgeGraph) -> KnowledgeGraph:
    """Undo :func:`augment_inverses`."""
    if not g.inverse_augmented:
        raise ValueError("graph is not inverse-augmented")
    names = g.relation_names[0::2]
    triples = [(h, r // 2, t) for h, r, t in g.triples if r % 2 == 0]
    return KnowledgeGraph(g.entity_names, names, triples, False, g.duplicates)


def _total_map(mapping, size: int, what: str) -> list[int]:
    if isinstance(mapping, Mapping):
        missing = [i for i in range(size) if i not in mapping]
        if missing:
            raise ValueError(f"{what} map is partial; missing ids {missing[:5]}")
        return [int(mapping[i]) for i in range(size)]
    values = list(mapping)
    if len(values) != size:
        raise ValueError(f"{what} map covers {len(values)} of {size} ids")
    return [int(v) for v in values]


def check_monomorphism(src: KnowledgeGraph, dst: KnowledgeGraph, m: Monomorphism) -> bool:
    """True iff both maps are injective and every mapped source triple lies in ``dst``."""
    eta = _total_map(m.entity_map, src.num_entities, "entity")
    rho = _total_map(m.relation_map, src.num_relations, "relation")
    if len(set(eta)) != len(eta) or len(set(rho)) != len(rho):
        return False
    return all((eta[h], rho[r], eta[t]) in dst for h, r, t in src.triples)


def relabel(
    g: KnowledgeGraph,
    entity_perm: Sequence[int],
    relation_perm: Sequence[int],
    entity_names: Sequence[str] | None = None,
    relation_names: Sequence[str] | None = None,
) -> KnowledgeGraph:
    """Isomorphic copy where old entity ``i`` becomes ``entity_perm[i]`` (same for relations).

    Relation permutations of an inverse-augmented graph must map inverse pairs
    onto inverse pairs, which is checked.
    """
    n_e, n_r = g.num_entities, g.num_relations
    if sorted(entity_perm) != list(range(n_e)) or sorted(relation_perm) != list(range(n_r)):
        raise ValueError("permutations must be bijections on the id ranges")
    if g.inverse_augmented:
        for k in range(0, n_r, 2):
            if relation_perm[k + 1] != relation_perm[k] ^ 1 or relation_perm[k] % 2:
                raise ValueError("relation permutation must preserve inverse pairing")
    if entity_names is None:
        entity_names = [""] * n_e
        for i, name in enumerate(g.entity_names):
            entity_names[entity_perm[i]] = name
    if relation_names is None:
        relation_names = [""] * n_r
        for i, name in enumerate(g.relation_names):
            relation_names[relation_perm[i]] = name
    triples = [(entity_perm[h], relation_perm[r], entity_perm[t]) for h, r, t in g.triples]
    return KnowledgeGraph(entity_names, relation_names, triples, g.inverse_augmented)


# file formats -----------------------------------------------------------

_NT_LINE = re.compile(r"^\s*<([^<>\s]*)>\s+<([^<>\s]*)>\s+<([^<>\s]*)>\s*\.\s*$")


def _read_tsv(lines: Iterable[str]) -> list[tuple[str, str, str]]:
    rows = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise ParseError(f"expected head<TAB>relation<TAB>tail, got {len(parts)} field(s)", lineno)
        rows.append((parts[0], parts[1], parts[2]))
    return rows


def _read_ntriples(lines: Iterable[str]) -> list[tuple[str, str, str]]:
    rows = []
    for lineno, line in enumerate(lines, 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if '"' in stripped:
            raise ParseError("literals are not supported", lineno)
        if "_:" in stripped:
            raise ParseError("blank nodes are not supported", lineno)
        match = _NT_LINE.match(stripped)
        if match is None:
            raise ParseError("expected '<iri> <iri> <iri> .'", lineno)
        rows.append(match.groups())
    return rows


def load_triples(path: str | Path, format: str | None = None) -> KnowledgeGraph:
    """Read a TSV or N-Triples file into an interned graph.

    ``format`` is ``"tsv"`` or ``"ntriples"``; by default it follows the file
    extension (``.nt`` means N-Triples, anything else TSV).
    """
    path = Path(path)
    if format is None:
        format = "ntriples" if path.suffix.lower() == ".nt" else "tsv"
    with path.open(encoding="utf-8") as fh:
        if format == "tsv":
            rows = _read_tsv(fh)
        elif format == "ntriples":
            rows = _read_ntriples(fh)
        else:
            raise ValueError(f"unknown triple format {format!r}")
    g = KnowledgeGraph.from_named_triples(rows)
    if g.duplicates:
        logger.warning("%s: dropped %d duplicate triple(s)", path, g.duplicates)
    return g


def write_triples(g: KnowledgeGraph, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for h, r, t in g.named_triples():
            fh.write(f"{h}\t{r}\t{t}\n")
