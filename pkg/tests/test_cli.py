import json

import pytest

from graphlet_kg import cli, verify
from graphlet_kg.synthetic import family_kg
from graphlet_kg.kg import KnowledgeGraph, write_triples

IKG = str(verify.fixture_path("ikg.tsv"))


class TestCommands:
    def test_relgraph_golden(self, tmp_path):
        assert cli.main(["relgraph", "--input", IKG, "--vocab", "ff_o,fff_o", "--no-inverses",
                         "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "relation_graph.json").read_text())
        assert len(data["edges"]) == 7
        run = json.loads((tmp_path / "run.json").read_text())
        assert data["metadata"]["config_hash"] == run["config_hash"]

    def test_mine_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.tsv"
        empty.write_text("")
        assert cli.main(["mine", "--input", str(empty), "--vocab", "v3+"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1 and lines[0].startswith("# config_hash")

    def test_mine_default_inverses(self, capsys):
        assert cli.main(["mine", "--input", IKG, "--vocab", "v2"]) == 0
        assert "r1^-1" in capsys.readouterr().out

    def test_stats(self, capsys):
        assert cli.main(["stats", "--input", IKG, "--no-inverses"]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert (stats["entities"], stats["relations"], stats["triples"]) == (7, 5, 8)

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cli.main(["relgraph", "--input", IKG, "--vocab", "v3+", "--deterministic", "--out", str(out)])
            outs.append((out / "relation_graph.json").read_bytes())
        assert outs[0] == outs[1]

    def test_train_then_eval(self, tmp_path, capsys):
        split = family_kg(num_families=2)
        train_path, test_path = tmp_path / "train.tsv", tmp_path / "test.tsv"
        write_triples(split.train, train_path)
        write_triples(KnowledgeGraph(split.train.entity_names, split.train.relation_names, split.test), test_path)
        run = tmp_path / "run"
        assert cli.main(["train", "--input", str(train_path), "--vocab", "v2", "--dim", "8", "--relation-layers",
                         "2", "--entity-layers", "2", "--steps", "5", "--out", str(run)]) == 0
        ckpt = json.loads((run / "checkpoint.json").read_text())
        assert ckpt["run"]["config_hash"] == json.loads((run / "run.json").read_text())["config_hash"]
        capsys.readouterr()
        assert cli.main(["eval", "--checkpoint", str(run / "checkpoint.json"), "--input", str(train_path),
                         "--test", str(test_path)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["num_queries"] == 2 * len(split.test) and report["config_hash"]


class TestExitCodes:
    def test_usage_error(self):
        assert cli.main(["mine"]) == 1
        assert cli.main(["nonsense"]) == 1

    def test_missing_file(self, tmp_path):
        assert cli.main(["mine", "--input", str(tmp_path / "nope.tsv")]) == 1

    def test_bad_vocabulary(self):
        assert cli.main(["mine", "--input", IKG, "--vocab", "v9"]) == 1

    def test_train_needs_out(self):
        assert cli.main(["train", "--input", IKG]) == 1

    def test_eval_unknown_test_ids(self, tmp_path):
        ckpt = tmp_path / "run"
        cli.main(["train", "--input", IKG, "--dim", "4", "--relation-layers", "1", "--entity-layers", "1",
                  "--steps", "1", "--out", str(ckpt)])
        test = tmp_path / "t.tsv"
        test.write_text("zz\tr1\ta\n")
        assert cli.main(["eval", "--checkpoint", str(ckpt / "checkpoint.json"), "--input", IKG,
                         "--test", str(test)]) == 1

    def test_verify_pass_and_fail(self, monkeypatch):
        assert cli.main(["verify", "--suite", "expressiveness"]) == 0
        failing = verify.SuiteResult("expressiveness", passed=False, failures=["forced"])
        monkeypatch.setitem(verify.SUITES, "expressiveness", lambda **kw: failing)
        assert cli.main(["verify", "--suite", "expressiveness"]) == 2
