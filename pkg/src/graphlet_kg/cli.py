"""``graphlet-kg`` command line: stats, mine, relgraph, train, eval, verify.

Exit codes: 0 success, 1 usage or I/O error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .evaluation import SETTINGS, evaluate, with_inverse_queries
from .kg import KnowledgeGraph, ParseError, augment_inverses, load_triples
from .matcher import mine, occurrences_to_tsv
from .model import Checkpoint, GraphScorer, ModelConfig, load_checkpoint, save_checkpoint
from .relation_graph import build
from .training import TrainingDiverged, train
from .verify import SUITES, run_suite
from .vocabulary import COUNT, EXISTENCE, GraphletPattern, QueryParseError, Vocabulary, resolve_vocabulary

log = logging.getLogger("graphlet_kg")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sha256_file(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_config(args: argparse.Namespace) -> dict:
    """Options that determine the outputs, plus content hashes of every input file."""
    skip = {"func", "out", "verbose"}
    options = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    inputs = {}
    for key in ("input", "checkpoint", "test"):
        path = getattr(args, key, None)
        if path:
            inputs[key] = _sha256_file(path)
    for i, path in enumerate(getattr(args, "filter", None) or []):
        inputs[f"filter{i}"] = _sha256_file(path)
    return {"version": __version__, "options": options, "inputs": inputs}


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _workers(args) -> int:
    return 1 if args.deterministic else max(1, args.threads)


def _load_graph(args) -> KnowledgeGraph:
    g = load_triples(args.input)
    return augment_inverses(g) if args.inverses else g


def _emit(args, filename: str, text: str, config: dict) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_text(text, encoding="utf-8")
    (out / "run.json").write_text(
        json.dumps({"config": config, "config_hash": config_hash(config)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


def cmd_stats(args) -> int:
    g = _load_graph(args)
    config = run_config(args)
    stats = dict(g.stats(), config_hash=config_hash(config))
    _emit(args, "stats.json", json.dumps(stats, indent=2, sort_keys=True) + "\n", config)
    return EXIT_OK


def cmd_mine(args) -> int:
    g = _load_graph(args)
    v = resolve_vocabulary(args.vocab, args.mode)
    config = run_config(args)
    classes = mine(g, v, injective=not args.non_injective, workers=_workers(args))
    text = f"# config_hash\t{config_hash(config)}\n" + occurrences_to_tsv(g, classes)
    _emit(args, "occurrences.tsv", text, config)
    return EXIT_OK


def cmd_relgraph(args) -> int:
    g = _load_graph(args)
    v = resolve_vocabulary(args.vocab, args.mode)
    config = run_config(args)
    rg = build(g, v, args.epsilon, injective=not args.non_injective, workers=_workers(args))
    rg.metadata["config_hash"] = config_hash(config)
    text = json.dumps(rg.to_dict(), indent=2, sort_keys=True) + "\n"
    _emit(args, "relation_graph.json", text, config)
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    return ModelConfig(
        dim=args.dim, relation_layers=args.relation_layers, entity_layers=args.entity_layers,
        num_negatives=args.negatives, learning_rate=args.lr, weight_decay=args.weight_decay,
        batch_size=args.batch_size, steps=args.steps, seed=args.seed,
        adversarial=args.adversarial, adversarial_temperature=args.adversarial_temperature,
        entity_message=args.entity_message,
    )


def _vocabulary_record(v: Vocabulary) -> dict:
    return {"name": v.name, "patterns": list(v.pattern_names), "definitions": [p.to_dict() for p in v.patterns]}


def _vocabulary_from_record(record: dict, mode: str) -> Vocabulary:
    patterns = tuple(GraphletPattern.from_dict(d) for d in record["definitions"])
    return Vocabulary(record["name"], patterns, mode)


def cmd_train(args) -> int:
    if args.out is None:
        raise UsageError("train needs --out DIR for the checkpoint")
    g = _load_graph(args)
    v = resolve_vocabulary(args.vocab, args.mode)
    cfg = _model_config(args)
    config = run_config(args)
    chash = config_hash(config)
    rg = build(g, v, args.epsilon, injective=not args.non_injective, workers=_workers(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(g, rg, cfg, metrics_path=out / "metrics.jsonl")
    graph_options = {"inverses": args.inverses, "epsilon": args.epsilon, "mode": args.mode,
                     "injective": not args.non_injective}
    run = {"config_hash": chash, "steps": result.steps,
           "first_loss": result.losses[0] if result.losses else None,
           "last_loss": result.losses[-1] if result.losses else None}
    save_checkpoint(out / "checkpoint.json",
                    Checkpoint(cfg, result.params, _vocabulary_record(v),
                               graph_options, run))
    (out / "run.json").write_text(json.dumps({"config": config, "config_hash": chash}, indent=2,
                                             sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(run, sort_keys=True))
    return EXIT_OK


def _map_triples(g: KnowledgeGraph, path: str) -> list[tuple[int, int, int]]:
    out = []
    for h, r, t in load_triples(path).named_triples():
        if not (g.has_entity(h) and g.has_entity(t) and g.has_relation(r)):
            raise UsageError(f"{path}: triple ({h}, {r}, {t}) uses ids absent from the inference graph")
        rid = g.relation_id(r)
        out.append((g.entity_id(h), rid, g.entity_id(t)))
    return out


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    opts = ckpt.graph_options
    args.inverses = opts.get("inverses", True)
    g = _load_graph(args)
    v = _vocabulary_from_record(ckpt.vocabulary, opts.get("mode", COUNT))
    rg = build(g, v, opts.get("epsilon", 1), injective=opts.get("injective", True), workers=_workers(args))
    test = _map_triples(g, args.test)
    if g.inverse_augmented:
        test = with_inverse_queries(g, test)
    filters = [g.triples, test] + [_map_triples(g, f) for f in (args.filter or [])]
    config = run_config(args)
    scorer = GraphScorer(g, rg, ckpt.params, ckpt.config)
    report = evaluate(scorer.score_tails, g, test, filters, filtered=not args.raw, setting=args.setting,
                      config_hash=config_hash(config))
    _emit(args, "eval.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", config)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = [run_suite(n, seed=args.seed) for n in names]
    config = run_config(args)
    payload = {"config_hash": config_hash(config),
               "suites": {r.name: {"passed": r.passed, "checked": r.checked, "failures": r.failures,
                                   "detail": r.detail} for r in results}}
    for r in results:
        print(r.summary(), file=sys.stderr)
    _emit(args, "verify.json", json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n", config)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="worker processes for mining")
    common.add_argument("--deterministic", action="store_true", help="force single-worker numeric paths")
    common.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    graph = _Parser(add_help=False)
    graph.add_argument("--input", required=True, help="triples file (.tsv or .nt)")
    graph.add_argument("--inverses", action=argparse.BooleanOptionalAction, default=True,
                       help="add an inverse for every relation before mining (default on)")

    mining = _Parser(add_help=False)
    mining.add_argument("--vocab", default="v2", help="v2-, u2, v2, v2+, v3-, v3, v3+, m3, m4', custom:FILE "
                                                      "or a comma-separated pattern list")
    mining.add_argument("--mode", choices=(COUNT, EXISTENCE), default=COUNT)
    mining.add_argument("--non-injective", action="store_true", help="allow r1 == r2 classes")

    parser = _Parser(prog="graphlet-kg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common, graph], help="graph size summary")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("mine", parents=[common, graph, mining], help="occurrence classes as TSV")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("relgraph", parents=[common, graph, mining], help="relation graph as JSON")
    p.add_argument("--epsilon", type=int, default=1)
    p.set_defaults(func=cmd_relgraph)

    p = sub.add_parser("train", parents=[common, graph, mining], help="train and write a checkpoint")
    p.add_argument("--epsilon", type=int, default=1)
    defaults = ModelConfig()
    p.add_argument("--dim", type=int, default=defaults.dim)
    p.add_argument("--relation-layers", type=int, default=defaults.relation_layers)
    p.add_argument("--entity-layers", type=int, default=defaults.entity_layers)
    p.add_argument("--negatives", type=int, default=defaults.num_negatives)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--steps", type=int, default=defaults.steps)
    p.add_argument("--adversarial", action="store_true", help="self-adversarial negative weighting")
    p.add_argument("--adversarial-temperature", type=float, default=defaults.adversarial_temperature)
    p.add_argument("--entity-message", choices=("per_relation_row", "query_row"), default=defaults.entity_message)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="filtered MRR / Hits@n on an inference graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="inference graph triples")
    p.add_argument("--test", required=True, help="test triples, named like the inference graph")
    p.add_argument("--filter", action="append", help="extra known-true triples to filter (repeatable)")
    p.add_argument("--raw", action="store_true", help="unfiltered ranking")
    p.add_argument("--setting", choices=SETTINGS, default="transductive")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common], help="run self-check suites")
    p.add_argument("--suite", choices=("all", *SUITES), default="all")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError, QueryParseError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
