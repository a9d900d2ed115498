"""Graphlet patterns, ASK-query rendering/parsing and the built-in vocabularies.

A pattern is a tiny basic graph pattern over entity variables ``?e0, ?e1, ...``
whose edges carry one of three relation slots: ``REL1`` and ``REL2`` (the two
anchored arguments of the positional binary order) or ``WILDCARD`` (a free
middle relation, ``?rel_0`` in query text). Distinctness is exactly the list
of ``!=`` filters, in printed order; nothing else is implied.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

REL1 = "REL1"
REL2 = "REL2"
WILDCARD = "WILDCARD"
SLOTS = (REL1, REL2, WILDCARD)

EXISTENCE = "existence"
COUNT = "count"


class QueryParseError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    src: str
    slot: str
    dst: str


@dataclass(frozen=True)
class GraphletPattern:
    name: str
    entity_vars: tuple[str, ...]
    edges: tuple[Edge, ...]
    filters: tuple[tuple[str, str], ...] = ()
    anchor: tuple[str, str] = (REL1, REL2)
    closed: bool = False

    def __post_init__(self):
        declared = set(self.entity_vars)
        if len(declared) != len(self.entity_vars):
            raise ValueError(f"{self.name}: duplicate entity variables")
        if self.anchor != (REL1, REL2):
            raise ValueError(f"{self.name}: anchor slots must be ({REL1}, {REL2})")
        slots = {e.slot for e in self.edges}
        if not {REL1, REL2} <= slots:
            raise ValueError(f"{self.name}: pattern needs at least one {REL1} and one {REL2} edge")
        for e in self.edges:
            if e.slot not in SLOTS:
                raise ValueError(f"{self.name}: unknown slot {e.slot!r}")
            if e.src not in declared or e.dst not in declared:
                raise ValueError(f"{self.name}: edge {e} uses an undeclared variable")
        for a, b in self.filters:
            if a not in declared or b not in declared:
                raise ValueError(f"{self.name}: filter ({a}, {b}) uses an undeclared variable")
            if a == b:
                raise ValueError(f"{self.name}: filter compares {a} with itself")
        if not _connected(self.entity_vars, self.edges):
            raise ValueError(f"{self.name}: pattern graph is not connected")

    @property
    def distinct_pairs(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset(p) for p in self.filters)

    @property
    def has_wildcard(self) -> bool:
        return any(e.slot == WILDCARD for e in self.edges)

    @property
    def is_two_path(self) -> bool:
        return len(self.edges) == 2 and not self.has_wildcard

    @property
    def is_three_path(self) -> bool:
        return len(self.edges) == 3 and [e.slot for e in self.edges] == [REL1, WILDCARD, REL2]

    def strict(self) -> "GraphletPattern":
        """Copy whose filters require every pair of entity variables to differ."""
        pairs = tuple(itertools.combinations(self.entity_vars, 2))
        return GraphletPattern(self.name, self.entity_vars, self.edges, pairs, self.anchor, self.closed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "edges": [[e.src, e.slot, e.dst] for e in self.edges],
            "filters": [list(p) for p in self.filters],
            "anchor": list(self.anchor),
            "closed": self.closed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphletPattern":
        edges = tuple(Edge(s, slot, d) for s, slot, d in data["edges"])
        filters = tuple((a, b) for a, b in data.get("filters", ()))
        anchor = tuple(data.get("anchor", (REL1, REL2)))
        closed = bool(data.get("closed", _has_cycle(edges)))
        return cls(data["name"], _vars_of(edges, filters), edges, filters, anchor, closed)


def _vars_of(edges: Sequence[Edge], filters=()) -> tuple[str, ...]:
    names = {v for e in edges for v in (e.src, e.dst)} | {v for p in filters for v in p}
    return tuple(sorted(names, key=_var_key))


def _var_key(name: str):
    m = re.fullmatch(r"e(\d+)", name)
    return (0, int(m.group(1)), "") if m else (1, 0, name)


def _connected(variables: Sequence[str], edges: Sequence[Edge]) -> bool:
    if not variables:
        return False
    adjacent = {v: set() for v in variables}
    for e in edges:
        adjacent[e.src].add(e.dst)
        adjacent[e.dst].add(e.src)
    seen, stack = {variables[0]}, [variables[0]]
    while stack:
        for w in adjacent[stack.pop()] - seen:
            seen.add(w)
            stack.append(w)
    return len(seen) == len(variables)


def _has_cycle(edges: Sequence[Edge]) -> bool:
    # connected pattern: a cycle exists iff edges >= vertices
    return len(edges) >= len({v for e in edges for v in (e.src, e.dst)})


# rendering and parsing ----------------------------------------------------

_SLOT_TEXT = {REL1: "{rel1}", REL2: "{rel2}", WILDCARD: "?rel_0"}


def render_query(p: GraphletPattern) -> str:
    """ASK query text with ``{rel1}``/``{rel2}`` placeholders."""
    lines = ["ASK WHERE {"]
    lines += [f"  ?{e.src} {_SLOT_TEXT[e.slot]} ?{e.dst} ." for e in p.edges]
    if p.filters:
        lines.append("  FILTER(" + " && ".join(f"?{a} != ?{b}" for a, b in p.filters) + ")")
    lines.append("}")
    return "\n".join(lines)


_UNSUPPORTED = (
    "OPTIONAL", "UNION", "MINUS", "BIND", "VALUES", "SELECT", "CONSTRUCT", "DESCRIBE",
    "GRAPH", "SERVICE", "EXISTS", "NOT", "ORDER", "LIMIT", "OFFSET", "GROUP", "HAVING",
    "PREFIX", "BASE", "FROM",
)
_VAR = r"\?([A-Za-z_][A-Za-z0-9_]*)"
_TRIPLE = re.compile(rf"^{_VAR}\s+(\S+)\s+{_VAR}$")
_NEQ = re.compile(rf"^{_VAR}\s*!=\s*{_VAR}$")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def pattern_from_query_text(text: str, name: str = "custom") -> GraphletPattern:
    """Parse one ASK template back into a :class:`GraphletPattern`.

    Supported: triple patterns ``?x {rel1}|{rel2}|?rel_N ?y`` and a conjunction
    of ``?a != ?b`` filters. Anything else raises :class:`QueryParseError`
    naming the construct.
    """
    body = _strip_comments(text).strip()
    upper = body.upper()
    for keyword in _UNSUPPORTED:
        if re.search(rf"\b{keyword}\b", upper):
            raise QueryParseError(f"unsupported SPARQL construct: {keyword}")
    m = re.fullmatch(r"ASK\s+(?:WHERE\s*)?\{(.*)\}", body, flags=re.S | re.I)
    if m is None:
        raise QueryParseError("expected 'ASK WHERE { ... }'")
    inner = m.group(1)

    filters: list[tuple[str, str]] = []
    for fm in list(re.finditer(r"FILTER\s*\(", inner, flags=re.I))[::-1]:
        depth, i = 1, fm.end()
        while i < len(inner) and depth:
            depth += {"(": 1, ")": -1}.get(inner[i], 0)
            i += 1
        if depth:
            raise QueryParseError("unbalanced parentheses in FILTER")
        expr = inner[fm.end(): i - 1]
        inner = inner[: fm.start()] + " " + inner[i:]
        filters[:0] = _parse_filter(expr)

    edges: list[Edge] = []
    wildcard_name = None
    # terms are variables or placeholders, so '.' only ever ends a statement
    for chunk in inner.split("."):
        chunk = " ".join(chunk.split())
        if not chunk:
            continue
        if ";" in chunk or "," in chunk:
            raise QueryParseError("unsupported SPARQL construct: predicate/object lists")
        tm = _TRIPLE.match(chunk)
        if tm is None:
            raise QueryParseError(f"unsupported triple pattern: {chunk!r}")
        src, pred, dst = tm.groups()
        if src.startswith("rel") or dst.startswith("rel"):
            raise QueryParseError(f"relation variable used as entity in {chunk!r}")
        if pred == "{rel1}":
            slot = REL1
        elif pred == "{rel2}":
            slot = REL2
        elif re.fullmatch(r"\?rel_\w+", pred):
            if wildcard_name not in (None, pred):
                raise QueryParseError("unsupported SPARQL construct: more than one wildcard relation")
            wildcard_name, slot = pred, WILDCARD
        elif any(op in pred for op in "/|^*+"):
            raise QueryParseError(f"unsupported SPARQL construct: property path {pred!r}")
        else:
            raise QueryParseError(f"unsupported predicate term {pred!r}")
        edges.append(Edge(src, slot, dst))
    if not edges:
        raise QueryParseError("query has no triple patterns")
    edges_t = tuple(edges)
    filters_t = tuple(filters)
    try:
        return GraphletPattern(name, _vars_of(edges_t, filters_t), edges_t, filters_t,
                               (REL1, REL2), _has_cycle(edges_t))
    except ValueError as exc:
        raise QueryParseError(str(exc)) from exc


def _parse_filter(expr: str) -> list[tuple[str, str]]:
    if "||" in expr:
        raise QueryParseError("unsupported SPARQL construct: '||' in FILTER")
    if "!" in expr.replace("!=", ""):
        raise QueryParseError("unsupported SPARQL construct: negation in FILTER")
    pairs = []
    for term in expr.split("&&"):
        term = " ".join(term.split())
        m = _NEQ.match(term)
        if m is None:
            raise QueryParseError(f"unsupported FILTER expression: {term!r}")
        pairs.append((m.group(1), m.group(2)))
    return pairs


# built-in catalogue -------------------------------------------------------

def _two_path(u: str, v: str, closed: bool) -> GraphletPattern:
    first = Edge("e0", REL1, "e1") if u == "f" else Edge("e1", REL1, "e0")
    end = "e0" if closed else "e2"
    second = Edge("e1", REL2, end) if v == "f" else Edge(end, REL2, "e1")
    filters = (("e0", "e1"),) if closed else (("e0", "e1"), ("e1", "e2"), ("e0", "e2"))
    edges = (first, second)
    return GraphletPattern(f"{u}{v}{'c' if closed else 'o'}", _vars_of(edges), edges, filters,
                           closed=closed)


def _undistinguished_two_path(u: str, v: str) -> GraphletPattern:
    first = Edge("e0", REL1, "e1") if u == "f" else Edge("e1", REL1, "e0")
    second = Edge("e1", REL2, "e2") if v == "f" else Edge("e2", REL2, "e1")
    edges = (first, second)
    return GraphletPattern(f"{u}{v}", _vars_of(edges), edges, ())


def _three_path(u: str, mid: str, w: str, closed: bool) -> GraphletPattern:
    first = Edge("e0", REL1, "e1") if u == "f" else Edge("e1", REL1, "e0")
    middle = Edge("e1", WILDCARD, "e2") if mid == "f" else Edge("e2", WILDCARD, "e1")
    end = "e0" if closed else "e3"
    last = Edge("e2", REL2, end) if w == "f" else Edge(end, REL2, "e2")
    if closed:
        filters = (("e0", "e1"), ("e1", "e2"), ("e0", "e2"))
    else:
        filters = (("e0", "e1"), ("e0", "e2"), ("e1", "e2"), ("e1", "e3"), ("e2", "e3"), ("e0", "e3"))
    edges = (first, middle, last)
    return GraphletPattern(f"{u}{mid}{w}{'c' if closed else 'o'}", _vars_of(edges), edges, filters,
                           closed=closed)


# printed filter lists of the N-M star queries (duplicates and gaps preserved)
_STAR_12_FILTERS = (("e0", "e1"), ("e1", "e2"), ("e2", "e3"), ("e3", "e0"), ("e0", "e2"), ("e1", "e2"))
_STAR_22_FILTERS = _STAR_12_FILTERS + (("e4", "e0"), ("e4", "e1"), ("e4", "e2"), ("e4", "e3"))


def _star_12(u: str, v: str) -> GraphletPattern:
    first = Edge("e0", REL1, "e1") if u == "f" else Edge("e1", REL1, "e0")
    if v == "f":
        rest = (Edge("e1", REL2, "e2"), Edge("e1", REL2, "e3"))
    else:
        rest = (Edge("e2", REL2, "e1"), Edge("e3", REL2, "e1"))
    edges = (first,) + rest
    return GraphletPattern(f"{u}{v}o_1-2", _vars_of(edges), edges, _STAR_12_FILTERS)


def _star_22(u: str, v: str) -> GraphletPattern:
    if u == "f":
        firsts = (Edge("e0", REL1, "e2"), Edge("e1", REL1, "e2"))
    else:
        firsts = (Edge("e2", REL1, "e0"), Edge("e2", REL1, "e1"))
    if v == "f":
        rest = (Edge("e2", REL2, "e3"), Edge("e2", REL2, "e4"))
    else:
        rest = (Edge("e3", REL2, "e2"), Edge("e4", REL2, "e2"))
    edges = firsts + rest
    return GraphletPattern(f"{u}{v}o_2-2", _vars_of(edges), edges, _STAR_22_FILTERS)


_UV = (("f", "f"), ("f", "r"), ("r", "f"), ("r", "r"))

OPEN_TWO_PATHS = tuple(_two_path(u, v, False) for u, v in _UV)
TWO_PATHS = tuple(p for u, v in _UV for p in (_two_path(u, v, False), _two_path(u, v, True)))
UNDISTINGUISHED_TWO_PATHS = tuple(_undistinguished_two_path(u, v) for u, v in _UV)
THREE_PATHS = tuple(
    p
    for u, m in _UV
    for w in "fr"
    for p in (_three_path(u, m, w, False), _three_path(u, m, w, True))
)
OPEN_THREE_PATHS = tuple(p for p in THREE_PATHS if not p.closed)
STARS_12 = tuple(_star_12(u, v) for u, v in _UV)
STARS_22 = tuple(_star_22(u, v) for u, v in _UV)

BUILTIN_PATTERNS = {
    p.name: p
    for p in TWO_PATHS + UNDISTINGUISHED_TWO_PATHS + THREE_PATHS + STARS_12 + STARS_22
}


def canonical_pattern_name(name: str) -> str:
    """Accept ``ff_o`` / ``fff_c`` spellings for ``ffo`` / ``fffc``."""
    m = re.fullmatch(r"([fr]{2,3})_([oc])", name)
    return m.group(1) + m.group(2) if m else name


def get_pattern(name: str) -> GraphletPattern:
    try:
        return BUILTIN_PATTERNS[canonical_pattern_name(name)]
    except KeyError:
        raise KeyError(f"unknown graphlet pattern {name!r}") from None


@dataclass(frozen=True)
class Vocabulary:
    name: str
    patterns: tuple[GraphletPattern, ...]
    mode: str = COUNT
    _by_name: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.mode not in (EXISTENCE, COUNT):
            raise ValueError(f"unknown matching mode {self.mode!r}")
        names = [p.name for p in self.patterns]
        if len(set(names)) != len(names):
            raise ValueError(f"vocabulary {self.name}: duplicate pattern names")
        object.__setattr__(self, "_by_name", {p.name: p for p in self.patterns})

    def __len__(self) -> int:
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def __contains__(self, name) -> bool:
        return canonical_pattern_name(name) in self._by_name

    @property
    def pattern_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.patterns)

    def pattern(self, name: str) -> GraphletPattern:
        return self._by_name[canonical_pattern_name(name)]

    def with_mode(self, mode: str) -> "Vocabulary":
        return Vocabulary(self.name, self.patterns, mode)

    def to_json(self) -> str:
        return json.dumps([p.to_dict() for p in self.patterns], indent=2)


_BUILTIN_VOCABULARIES = {
    "V2-": OPEN_TWO_PATHS,
    "U2": UNDISTINGUISHED_TWO_PATHS,
    "V2": TWO_PATHS,
    "V2+": TWO_PATHS + STARS_12 + STARS_22,
    "V3-": TWO_PATHS + OPEN_THREE_PATHS,
    "V3": TWO_PATHS + THREE_PATHS,
    "V3+": TWO_PATHS + THREE_PATHS + STARS_12 + STARS_22,
    "M3": STARS_12,
    "M4'": STARS_12 + STARS_22,
}
BUILTIN_VOCABULARY_NAMES = tuple(_BUILTIN_VOCABULARIES)


def builtin_vocabulary(name: str, mode: str = COUNT, strict: bool = False) -> Vocabulary:
    """Named vocabulary (case-insensitive, e.g. ``"v3+"``).

    ``strict`` replaces every pattern's printed filters by all-pairs
    distinctness.
    """
    key = {k.upper(): k for k in _BUILTIN_VOCABULARIES}.get(name.upper())
    if key is None:
        raise KeyError(f"unknown vocabulary {name!r}; choose from {', '.join(BUILTIN_VOCABULARY_NAMES)}")
    patterns = _BUILTIN_VOCABULARIES[key]
    if strict:
        patterns = tuple(p.strict() for p in patterns)
    return Vocabulary(key, patterns, mode)


def custom_vocabulary(patterns: Iterable[GraphletPattern | str], mode: str = COUNT,
                      name: str = "custom") -> Vocabulary:
    resolved = tuple(get_pattern(p) if isinstance(p, str) else p for p in patterns)
    return Vocabulary(name, resolved, mode)


def load_vocabulary(path: str | Path, mode: str = COUNT) -> Vocabulary:
    """Read a JSON vocabulary file: a list of pattern objects or built-in pattern names."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError("vocabulary file must hold a JSON list")
    patterns = [item if isinstance(item, str) else GraphletPattern.from_dict(item) for item in data]
    return custom_vocabulary(patterns, mode)


def resolve_vocabulary(spec: str, mode: str = COUNT) -> Vocabulary:
    """``v2``-style built-in name, ``custom:FILE``, or a comma list of pattern names."""
    if spec.startswith("custom:"):
        return load_vocabulary(spec[len("custom:"):], mode)
    if "," in spec or canonical_pattern_name(spec) in BUILTIN_PATTERNS:
        return custom_vocabulary([s.strip() for s in spec.split(",") if s.strip()], mode)
    return builtin_vocabulary(spec, mode)


def spans(anchor: Sequence[int], n: int) -> frozenset[tuple[int, ...]]:
    """All n-ary index tuples induced by a positional order anchored at ``anchor``.

    ``anchor`` lists 1-based argument positions; the argument at an anchored
    position is that position itself and every other (dummy) position ranges
    over ``1..n``. ``spans((1, 3), 3)`` is ``{(1,1,3), (1,2,3), (1,3,3)}``.
    """
    anchor = tuple(anchor)
    if len(set(anchor)) != len(anchor) or any(not 1 <= a <= n for a in anchor):
        raise ValueError(f"anchor positions {anchor} must be distinct and within 1..{n}")
    choices = [(pos,) if pos in anchor else tuple(range(1, n + 1)) for pos in range(1, n + 1)]
    return frozenset(itertools.product(*choices))
