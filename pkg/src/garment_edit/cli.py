"""Command-line entry points: the full run and each stage on its own."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .backends import BackendError
from .config import ConfigError, RunConfig, load_config, weights_from, with_overrides
from .documents import ParseError, SchemaViolation, iter_documents, graph_from_obj, answers_from_obj, serialize_report
from .images import atomic_write
from .pipeline import CorpusEmpty, Manifest, Stage, refilter, run_pipeline
from .scoring import AnswerMismatch, DomainError, GraphError, Weights, feditscore, validate_graph
from .stats import DEFAULT_TOP_K, EmptyManifest, compute_stats

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_BACKEND = 0, 2, 3, 4

STAGE_COMMANDS = {
    "synthesize": Stage.SYNTHESIZED,
    "edit-images": Stage.IMAGE_EDITED,
    "build-graphs": Stage.GRAPH_BUILT,
    "answer": Stage.ANSWERED,
    "run": Stage.SCORED,
}

log = logging.getLogger("garment_edit")


def _weight_flags(p: argparse.ArgumentParser) -> None:
    for name in ("w_icq", "w_cpq", "t_decay", "alpha"):
        p.add_argument(f"--weights.{name}", dest=f"weights_{name}", type=float, metavar="F", help=f"override weights.{name}")


def _run_flags(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, metavar="PATH", help="run config file (TOML)")
    _weight_flags(p)
    p.add_argument("--mock-fixtures", metavar="DIR", help="use the offline mock backends, with canned replies from DIR")
    p.add_argument("--seed", type=int, metavar="U64", help="run seed")
    p.add_argument("--output-dir", metavar="PATH", help="override run.output_dir")
    p.add_argument("--top-k-keywords", type=int, default=None, metavar="N", help=f"keywords in the stats table (default {DEFAULT_TOP_K})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="garment-edit", description="Garment-edit triplet synthesis and FEditScore filtering.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every backend attempt")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    for name, stage in STAGE_COMMANDS.items():
        helptext = "run every stage, then write stats" if name == "run" else f"advance samples up to {stage.label}"
        p = sub.add_parser(name, help=helptext, description=helptext)
        _run_flags(p)
        p.add_argument("--corpus", metavar="DIR", help="directory of original images (overrides run.corpus_dir)")

    p = sub.add_parser("score", help="score one graph document against one answer document")
    p.add_argument("graph_file")
    p.add_argument("answers_file")
    p.add_argument("--config", metavar="PATH", help="take weights from this config")
    _weight_flags(p)

    p = sub.add_parser("filter", help="recompute keep/drop decisions for a finished run")
    _run_flags(p)

    p = sub.add_parser("stats", help="category shares, retention and keywords for a run")
    _run_flags(p)

    p = sub.add_parser("validate-graph", help="check a graph document and print question depths")
    p.add_argument("graph_file")
    return parser


def _weights(args: argparse.Namespace, base: Weights) -> Weights:
    return weights_from({k: getattr(args, f"weights_{k}") for k in ("w_icq", "w_cpq", "t_decay", "alpha")}, base)


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    cfg = replace(cfg, weights=_weights(args, cfg.weights))
    if args.mock_fixtures:
        cfg = replace(cfg, backend_mode="mock", mock_fixtures=str(Path(args.mock_fixtures).resolve()))
    return with_overrides(
        cfg,
        seed=args.seed,
        output_dir=None if args.output_dir is None else str(Path(args.output_dir).resolve()),
        corpus_dir=None if getattr(args, "corpus", None) is None else str(Path(args.corpus).resolve()),
    )


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None


def _single(text: str, what: str):
    docs = list(iter_documents(text))
    if len(docs) != 1:
        raise ParseError(f"{what} must hold exactly one document, found {len(docs)}")
    return docs[0]


def cmd_score(args: argparse.Namespace) -> int:
    base = load_config(args.config).weights if args.config else Weights()
    weights = _weights(args, base)
    graph = graph_from_obj(_single(_read(args.graph_file), "graph file"))
    answers = answers_from_obj(_single(_read(args.answers_file), "answers file"))
    report = feditscore(validate_graph(graph), answers, weights)
    report = replace(report, sample_id=graph.sample_id or answers.sample_id)
    print(serialize_report(report))
    return EXIT_OK


def cmd_validate_graph(args: argparse.Namespace) -> int:
    graph = graph_from_obj(_single(_read(args.graph_file), "graph file"))
    v = validate_graph(graph)
    print(json.dumps({"sample_id": graph.sample_id, "valid": True, "order": list(v.order), "depths": dict(sorted(v.depths.items()))}))
    return EXIT_OK


def _write_stats(cfg: RunConfig, manifest: Manifest, top_k: int | None) -> None:
    stats = compute_stats(manifest, top_k=top_k or DEFAULT_TOP_K)
    out = Path(cfg.output_dir)
    atomic_write(out / "stats.txt", stats.render().encode("utf-8"))
    atomic_write(out / "stats.json", (json.dumps(stats.to_dict(), indent=2) + "\n").encode("utf-8"))
    sys.stdout.write(stats.render())


def cmd_stage(args: argparse.Namespace) -> int:
    cfg = _config(args)
    corpus = cfg.corpus_dir
    if corpus is None:
        raise ConfigError("no corpus: pass --corpus or set run.corpus_dir")
    manifest = run_pipeline(cfg, corpus, until=STAGE_COMMANDS[args.command], progress=lambda m: print(m, file=sys.stderr))
    report = manifest.run_report
    print(f"cache hits: {report.get('cache_hits')}, backend calls: {report.get('backend_calls')}", file=sys.stderr)
    print(f"manifest digest: {manifest.digest()}", file=sys.stderr)
    if args.command == "run":
        _write_stats(cfg, manifest, args.top_k_keywords)
    if manifest.records and all(r["failures"] and r["decision"] is None for r in manifest.records):
        print("every sample failed", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = _config(args)
    manifest = refilter(cfg.output_dir, cfg.weights)
    manifest.write(cfg.output_dir)
    kept = manifest.kept()
    body = "".join(json.dumps(r, sort_keys=True) + "\n" for r in kept)
    atomic_write(Path(cfg.output_dir) / "kept.jsonl", body.encode("utf-8"))
    print(f"kept {len(kept)} of {len(manifest.records)} samples at alpha={cfg.weights.alpha}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _config(args)
    try:
        manifest = Manifest.load(cfg.output_dir)
    except FileNotFoundError:
        raise ParseError(f"no manifest in {cfg.output_dir}") from None
    _write_stats(cfg, manifest, args.top_k_keywords)
    return EXIT_OK


COMMANDS = {"score": cmd_score, "validate-graph": cmd_validate_graph, "filter": cmd_filter, "stats": cmd_stats}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS.get(args.command, cmd_stage)
    try:
        return handler(args)
    except (ConfigError, DomainError, GraphError, AnswerMismatch, SchemaViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ParseError, CorpusEmpty, EmptyManifest) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except KeyboardInterrupt:
        print("interrupted; manifest flushed", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
