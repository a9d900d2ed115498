import json
from pathlib import Path

import pytest

from graphlet_kg.vocabulary import (
    BUILTIN_PATTERNS,
    BUILTIN_VOCABULARY_NAMES,
    GraphletPattern,
    QueryParseError,
    builtin_vocabulary,
    canonical_pattern_name,
    get_pattern,
    load_vocabulary,
    pattern_from_query_text,
    render_query,
    resolve_vocabulary,
    spans,
)

PRINTED = json.loads((Path(__file__).parent / "data" / "builtin_queries.json").read_text())


class TestBuiltinQueries:
    """Each built-in pattern round-trips through the printed ASK template."""

    @pytest.mark.parametrize("name", sorted(PRINTED))
    def test_parse_matches_builtin(self, name):
        parsed = pattern_from_query_text(PRINTED[name], name)
        builtin = get_pattern(name)
        assert parsed.edges == builtin.edges
        assert parsed.filters == builtin.filters
        assert parsed.closed == builtin.closed

    @pytest.mark.parametrize("name", sorted(PRINTED))
    def test_render_matches_text(self, name):
        assert render_query(get_pattern(name)).split() == PRINTED[name].split()

    def test_printed_filters_kept_verbatim(self):
        # duplicate e1/e2 pair and missing e0/e3, e1/e3 pairs are preserved
        star = get_pattern("ffo_1-2")
        assert star.filters.count(("e1", "e2")) == 2
        assert frozenset(("e1", "e3")) not in star.distinct_pairs
        strict = star.strict()
        assert len(strict.distinct_pairs) == 6


class TestVocabularySizes:
    @pytest.mark.parametrize("name,size", [
        ("V2-", 4), ("U2", 4), ("V2", 8), ("V2+", 16), ("V3-", 16), ("V3", 24), ("V3+", 32), ("M3", 4), ("M4'", 8),
    ])
    def test_size(self, name, size):
        assert len(builtin_vocabulary(name)) == size

    def test_two_path_order(self):
        assert builtin_vocabulary("v2").pattern_names == ("ffo", "ffc", "fro", "frc", "rfo", "rfc", "rro", "rrc")

    def test_nesting(self):
        names = {n: set(builtin_vocabulary(n).pattern_names) for n in BUILTIN_VOCABULARY_NAMES}
        assert names["V2-"] < names["V2"] < names["V2+"] < names["V3+"]
        assert names["V2"] < names["V3-"] < names["V3"] < names["V3+"]
        assert names["M3"] < names["M4'"] <= names["V2+"]

    def test_undistinguished_has_no_filters(self):
        assert all(not p.filters for p in builtin_vocabulary("U2"))

    def test_unknown(self):
        with pytest.raises(KeyError):
            builtin_vocabulary("V9")


class TestNames:
    def test_aliases(self):
        assert canonical_pattern_name("ff_o") == "ffo"
        assert canonical_pattern_name("fff_c") == "fffc"
        assert get_pattern("fr_c") is BUILTIN_PATTERNS["frc"]

    def test_resolve_forms(self, tmp_path):
        assert resolve_vocabulary("v3+").name == "V3+"
        assert resolve_vocabulary("ff_o,fff_o").pattern_names == ("ffo", "fffo")
        path = tmp_path / "vocab.json"
        path.write_text(json.dumps(["ffo", get_pattern("fffc").to_dict()]))
        assert resolve_vocabulary(f"custom:{path}").pattern_names == ("ffo", "fffc")


class TestCustomPatterns:
    def test_dict_roundtrip(self):
        for p in BUILTIN_PATTERNS.values():
            assert GraphletPattern.from_dict(p.to_dict()) == p

    def test_load_vocabulary_rejects_non_list(self, tmp_path):
        path = tmp_path / "v.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_vocabulary(path)

    @pytest.mark.parametrize("text,construct", [
        ("ASK WHERE { ?a {rel1} ?b . OPTIONAL { ?b {rel2} ?c } }", "OPTIONAL"),
        ("ASK WHERE { { ?a {rel1} ?b } UNION { ?b {rel2} ?c } }", "UNION"),
        ("ASK WHERE { ?a {rel1} ?b . ?b {rel2} ?c . FILTER(?a != ?b || ?b != ?c) }", "'||'"),
        ("ASK WHERE { ?a {rel1}/{rel2} ?b }", "unsupported"),
    ])
    def test_unsupported_constructs(self, text, construct):
        with pytest.raises(QueryParseError, match="unsupported"):
            pattern_from_query_text(text)

    def test_disconnected_rejected(self):
        with pytest.raises(QueryParseError, match="connected"):
            pattern_from_query_text("ASK WHERE { ?a {rel1} ?b . ?c {rel2} ?d }")

    def test_custom_triangle(self):
        p = pattern_from_query_text(
            "ASK WHERE { ?x {rel1} ?y . ?y {rel2} ?z . ?z ?rel_0 ?x . FILTER(?x != ?y && ?y != ?z) }", "tri")
        assert p.closed and p.has_wildcard and len(p.filters) == 2


class TestSpans:
    def test_three_ary(self):
        assert spans((1, 3), 3) == {(1, 1, 3), (1, 2, 3), (1, 3, 3)}

    def test_four_ary(self):
        s = spans((1, 4), 4)
        assert len(s) == 16
        assert all(t[0] == 1 and t[3] == 4 for t in s)

    def test_invalid_anchor(self):
        with pytest.raises(ValueError):
            spans((1, 1), 3)
        with pytest.raises(ValueError):
            spans((1, 4), 3)
