"""Command-line entry point: ``hdlgraph <command> ...``.

Exit codes:

* 0: success
* 1: domain or input error (missing file, bad format, unknown node, ...)
* 2: usage error (bad flags or arguments)
* 3: external service error (embedding, decomposer or text-generation endpoint)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any
from urllib.parse import urlparse

from .dataflow import DEFAULT_GRAPH_DIM, DEFAULT_HOPS, completion_matches, error_candidates
from .errors import (
    HdlGraphError,
    PreconditionError,
    ProviderError,
    TransportError,
    UnknownNode,
)
from .eval import (
    bm25_engine,
    format_table,
    graph_engine,
    lexical_engine,
    load_benchmark,
    reports_to_json,
    run_search_eval,
)
from .graph.builder import index_repository
from .graph.model import NodeKind
from .retrieval import (
    MIN_CANDIDATES,
    RemoteDecomposer,
    RetrievalHit,
    RuleBasedDecomposer,
    retrieve,
    search_block,
    search_module,
    search_module_block,
    search_module_signal,
    search_signal,
)
from .scoring import DEFAULT_DIM, LexicalEmbedder, RemoteEmbedder
from .store import GraphDatabase

logger = logging.getLogger("hdlgraph")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_SERVICE = 0, 1, 2, 3


@dataclass
class Config:
    database: str | None = None
    embedder: str = "lexical"
    embed_url: str | None = None
    decomposer: str = "rule_based"
    decomposer_url: str | None = None
    provider_url: str | None = None
    k: int = 5
    min_candidates: int = MIN_CANDIDATES
    max_hops: int = 3
    hops: int = DEFAULT_HOPS
    dim: int = DEFAULT_DIM
    dim_graph: int = DEFAULT_GRAPH_DIM
    jobs: int = 1

    def validate(self) -> None:
        for name in ("k", "min_candidates", "max_hops", "hops", "dim", "dim_graph", "jobs"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"config value {name} must be >= 1")
        if self.embedder not in ("lexical", "remote"):
            raise PreconditionError(f"unknown embedder {self.embedder!r}")
        if self.decomposer not in ("rule_based", "remote"):
            raise PreconditionError(f"unknown decomposer {self.decomposer!r}")
        for name in ("embed_url", "decomposer_url", "provider_url"):
            url = getattr(self, name)
            if url is not None and urlparse(url).scheme not in ("http", "https"):
                raise PreconditionError(f"{name} must be an http(s) URL, got {url!r}")
        if self.embedder == "remote" and not self.embed_url:
            raise PreconditionError("embedder 'remote' needs embed_url")
        if self.decomposer == "remote" and not self.decomposer_url:
            raise PreconditionError("decomposer 'remote' needs decomposer_url")


def load_config(path: str | None, overrides: dict[str, Any]) -> Config:
    """JSON config file values, then non-None command-line flags on top."""
    values: dict[str, Any] = {}
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise PreconditionError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(Config)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise PreconditionError(f"{path}: unknown config keys {unknown}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = Config(**values)
    config.validate()
    return config


# -- helpers --------------------------------------------------------------------


def make_embedder(config: Config, db: GraphDatabase | None = None):
    if config.embedder == "remote":
        return RemoteEmbedder(config.embed_url)  # type: ignore[arg-type]
    dim = config.dim
    if db is not None:
        # queries must live in the index's vector space
        sample = next((n.embedding for n in db.graph.nodes.values() if n.embedding), None)
        if sample is not None:
            dim = len(sample)
    return LexicalEmbedder(dim)


def make_decomposer(config: Config):
    if config.decomposer == "remote":
        return RemoteDecomposer(config.decomposer_url)  # type: ignore[arg-type]
    return RuleBasedDecomposer()


def open_db(config: Config) -> GraphDatabase:
    if not config.database:
        raise PreconditionError("no database given (positional argument or config 'database')")
    return GraphDatabase.load(config.database)


def resolve_signal(db: GraphDatabase, ref: str) -> str:
    """Accept a node id, ``module.signal`` or a repository-unique signal name."""
    if ref in db:
        return ref
    module, _, name = ref.rpartition(".")
    matches = [n.id for n in db.find(NodeKind.SIGNAL, name)
               if not module or n.attributes.get("module") == module]
    if not matches and module:
        # instance port placeholders carry a dotted name
        matches = [n.id for n in db.find(NodeKind.SIGNAL, ref)]
    if not matches:
        raise UnknownNode(f"no signal matches {ref!r}")
    if len(matches) > 1:
        raise PreconditionError(f"{ref!r} is ambiguous: {', '.join(matches)}")
    return matches[0]


def emit(args: argparse.Namespace, payload: dict, human: str) -> None:
    if args.json:
        body = {"schema_version": SCHEMA_VERSION, **payload}
        sys.stdout.write(json.dumps(body, indent=2, sort_keys=True, ensure_ascii=True) + "\n")
    else:
        sys.stdout.write(human.rstrip("\n") + "\n")


def _indent(code: str, prefix: str = "      ") -> str:
    return "\n".join(prefix + line for line in code.splitlines())


def format_hits(hits: Sequence[RetrievalHit], show_code: bool = True) -> str:
    if not hits:
        return "no results"
    lines = []
    for rank, h in enumerate(hits, 1):
        where = f"  [{h.module_name}]" if h.module_name else ""
        lines.append(f"{rank:>3}. {h.score:.4f}  {h.node_id}{where}  ({h.provenance})")
        if h.signals:
            lines.append(f"      signals: {', '.join(h.signals)}")
        if show_code and h.code:
            lines.append(_indent(h.code))
    return "\n".join(lines)


# -- commands -------------------------------------------------------------------


def cmd_index(args: argparse.Namespace, config: Config) -> int:
    out = args.output or config.database
    if not out:
        raise PreconditionError("no output database path (-o/--output)")
    root = Path(args.root)
    if not root.is_dir():
        raise FileNotFoundError(f"repository root {root} is not a directory")
    graph = index_repository(root, make_embedder(config), jobs=config.jobs,
                             dfg_embeddings=not args.no_dfg_embeddings,
                             graph_dim=config.dim_graph, hops=config.hops)
    db = GraphDatabase(graph)
    db.save(out)
    counts = {kind.value: len(db.find(kind)) for kind in NodeKind}
    diags = [d.to_dict() for d in sorted(graph.diagnostics)]
    human = [f"indexed {root} -> {out}",
             "  " + ", ".join(f"{k}={v}" for k, v in counts.items()) + f", edges={len(graph.edges)}"]
    human += [f"  {d['code']} {d['file']}:{d['line']}: {d['message']}" for d in diags]
    emit(args, {"command": "index", "database": str(out), "nodes": counts,
                "edges": len(graph.edges), "diagnostics": diags}, "\n".join(human))
    return EXIT_OK


def cmd_search(args: argparse.Namespace, config: Config) -> int:
    db = open_db(config)
    embedder = make_embedder(config, db)
    k = config.k
    level = args.level
    decomposed = None
    if level == "auto":
        result = retrieve(db, embedder, make_decomposer(config), args.query, k,
                          config.min_candidates)
        hits, decomposed = result.hits, result.query.to_dict()
        signals = [h.to_dict() for h in result.signals[:k]]
    else:
        signals = []
        if level == "module":
            hits = search_module(db, embedder, args.query, k)
        elif level == "block":
            hits = search_block(db, embedder, args.query, k)
        elif level == "signal":
            hits = search_signal(db, embedder, args.query, k)
        elif level == "module-block":
            hits = search_module_block(db, embedder, args.module_query or args.query,
                                       args.query, k)
        else:
            hits = search_module_signal(db, embedder, args.module_query or args.query,
                                        args.query, k)
    payload = {"command": "search", "query": args.query, "level": level, "k": k,
               "hits": [h.to_dict() for h in hits]}
    human = format_hits(hits, show_code=not args.no_code)
    if decomposed is not None:
        payload["decomposition"] = decomposed
        payload["signals"] = signals
        parts = ", ".join(f"{key}={val!r}" for key, val in decomposed.items()
                          if key != "raw" and val)
        human = f"decomposed: {parts}\n{human}"
        if signals:
            human += "\nmatched signals:\n" + "\n".join(
                f"  {s['score']:.4f}  {s['node_id']}" for s in signals)
    emit(args, payload, human)
    return EXIT_OK


def cmd_debug(args: argparse.Namespace, config: Config) -> int:
    db = open_db(config)
    sid = resolve_signal(db, args.signal)
    cands = error_candidates(db, sid, config.max_hops)
    human = [f"upstream of {sid} within {config.max_hops} hop(s): "
             f"{len(cands.blocks)} candidate block(s)"
             + (" (frontier truncated)" if cands.frontier_truncated else "")]
    for i, b in enumerate(cands.blocks, 1):
        human.append(f"{i:>3}. hop {b.distance}  {b.node_id}")
        if not args.no_code:
            human.append(_indent(b.code))
    emit(args, {"command": "debug", "signal": sid, "max_hops": config.max_hops,
                "frontier_truncated": cands.frontier_truncated,
                "signals_on_path": list(cands.signals_on_path),
                "blocks": [b.to_dict() for b in cands.blocks]}, "\n".join(human))
    return EXIT_OK


def cmd_complete(args: argparse.Namespace, config: Config) -> int:
    db = open_db(config)
    fragment = Path(args.fragment).read_text(encoding="utf-8")
    hits = completion_matches(db, make_embedder(config, db), fragment, config.k, config.hops)
    emit(args, {"command": "complete", "fragment": str(args.fragment), "k": config.k,
                "hits": [h.to_dict() for h in hits]},
         format_hits(hits, show_code=not args.no_code))
    return EXIT_OK


ENGINES = ("graph", "lexical", "bm25")


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    db = open_db(config)
    embedder = make_embedder(config, db)
    labels = [e.strip() for e in args.engines.split(",") if e.strip()]
    unknown = sorted(set(labels) - set(ENGINES))
    if unknown:
        raise PreconditionError(f"unknown engines {unknown}; choose from {list(ENGINES)}")
    factories = {
        "graph": lambda: graph_engine(db, embedder, make_decomposer(config)),
        "lexical": lambda: lexical_engine(db, embedder),
        "bm25": lambda: bm25_engine(db),
    }
    reports = run_search_eval(db, [(label, factories[label]()) for label in labels],
                              load_benchmark(args.benchmark), config.k)
    if args.report:
        Path(args.report).write_text(reports_to_json(reports), encoding="utf-8")
    emit(args, {"command": "eval", "reports": [r.to_dict() for r in reports]},
         format_table(reports))
    return EXIT_OK


def cmd_benchgen(args: argparse.Namespace, config: Config) -> int:
    from .benchgen import (
        RecordingProvider,
        RemoteProvider,
        ReplayProvider,
        generate_benchmark,
        load_manifest,
        write_outputs,
    )

    db = open_db(config)
    manifest = load_manifest(args.manifest, index_root=args.index_root)
    if args.transcript:
        provider = ReplayProvider(args.transcript)
    elif config.provider_url:
        provider = RemoteProvider(config.provider_url)
    else:
        raise PreconditionError("benchgen needs --transcript or a provider URL")
    recorder = RecordingProvider(provider) if args.record else None
    report = generate_benchmark(db, manifest, recorder or provider, args.rounds,
                                checkpoint=args.checkpoint)
    review = write_outputs(report, args.output)
    if recorder is not None:
        recorder.save(args.record)
    counts = report.counts
    human = [f"wrote {args.output} ({sum(counts.values())} queries) and {review}",
             "  " + ", ".join(f"{k}={v}" for k, v in counts.items()),
             f"  rejected: {len(report.rejections)}"]
    emit(args, {"command": "benchgen", "output": str(args.output), "review": str(review),
                "counts": counts, "rejected": len(report.rejections)}, "\n".join(human))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdlgraph",
                                description="Graph-based retrieval over Verilog repositories.")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--embedder", choices=["lexical", "remote"])
    common.add_argument("--embed-url", dest="embed_url")
    common.add_argument("--no-code", action="store_true", help="omit code in human output")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("index", parents=[common], help="parse a tree and write a database")
    s.add_argument("root")
    s.add_argument("-o", "--output")
    s.add_argument("--dim", type=int)
    s.add_argument("--dim-graph", dest="dim_graph", type=int)
    s.add_argument("--hops", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--no-dfg-embeddings", action="store_true")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("search", parents=[common], help="multi-level retrieval")
    s.add_argument("database")
    s.add_argument("query")
    s.add_argument("-k", type=int)
    s.add_argument("--level", default="auto",
                   choices=["auto", "module", "block", "signal", "module-block",
                            "module-signal"])
    s.add_argument("--module-query", help="module part for module-block/module-signal")
    s.add_argument("--k0", dest="min_candidates", type=int,
                   help="minimum per-level candidate breadth")
    s.add_argument("--decomposer", choices=["rule_based", "remote"])
    s.add_argument("--decomposer-url", dest="decomposer_url")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("debug", parents=[common], help="upstream error candidates")
    s.add_argument("database")
    s.add_argument("signal", help="node id, module.signal, or a unique signal name")
    s.add_argument("--max-hops", dest="max_hops", type=int)
    s.set_defaults(func=cmd_debug)

    s = sub.add_parser("complete", parents=[common], help="blocks similar to a fragment")
    s.add_argument("database")
    s.add_argument("fragment", help="file holding a partial module body")
    s.add_argument("-k", type=int)
    s.add_argument("--hops", type=int)
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("eval", parents=[common], help="MRR of engines on a benchmark")
    s.add_argument("database")
    s.add_argument("benchmark")
    s.add_argument("--engines", default=",".join(ENGINES))
    s.add_argument("-k", type=int)
    s.add_argument("--report", help="also write the JSON report here")
    s.add_argument("--decomposer", choices=["rule_based", "remote"])
    s.add_argument("--decomposer-url", dest="decomposer_url")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("benchgen", parents=[common], help="generate a benchmark")
    s.add_argument("database")
    s.add_argument("manifest")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--transcript", help="replay responses from this transcript")
    s.add_argument("--provider-url", dest="provider_url")
    s.add_argument("--record", help="write every exchange to this transcript")
    s.add_argument("-K", "--rounds", type=int, default=7)
    s.add_argument("--checkpoint", help="JSONL progress file for resumable runs")
    s.add_argument("--index-root", help="directory the database was indexed from")
    s.set_defaults(func=cmd_benchgen)
    return p


_CONFIG_FLAGS = ("embedder", "embed_url", "decomposer", "decomposer_url", "provider_url", "k",
                 "min_candidates", "max_hops", "hops", "dim", "dim_graph", "jobs")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {name: getattr(args, name, None) for name in _CONFIG_FLAGS}
    if getattr(args, "database", None) is not None:
        overrides["database"] = args.database
    try:
        config = load_config(args.config, overrides)
    except PreconditionError as exc:
        # out-of-range flag or config values are usage errors
        parser.print_usage(sys.stderr)
        _report_error(args, exc)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        _report_error(args, exc)
        return EXIT_DOMAIN
    try:
        return args.func(args, config)
    except (TransportError, ProviderError) as exc:
        _report_error(args, exc)
        return EXIT_SERVICE
    except (HdlGraphError, OSError, json.JSONDecodeError, ValueError) as exc:
        _report_error(args, exc)
        return EXIT_DOMAIN


def _report_error(args: argparse.Namespace, exc: BaseException) -> None:
    message = str(exc) if not isinstance(exc, FileNotFoundError) or not exc.filename \
        else f"no such file: {exc.filename}"
    if args.json:
        body = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__,
                "message": message}
        sys.stdout.write(json.dumps(body, sort_keys=True) + "\n")
    print(f"hdlgraph: error: {type(exc).__name__}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
