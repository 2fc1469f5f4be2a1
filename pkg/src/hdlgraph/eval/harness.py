"""Run retrieval engines over a benchmark and report MRR side by side."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from ..errors import PreconditionError, UnknownBenchmarkNode
from ..graph.model import EdgeKind, NodeKind
from ..retrieval import (
    Decomposer,
    Level,
    retrieve,
    search_block,
    search_module,
    search_signal,
)
from ..scoring import CorpusStats, Embedder, bm25_score, tokenize_code
from ..store import Direction, GraphDatabase
from .benchmark import BenchmarkQuery
from .metrics import mrr, reciprocal_rank

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

# an engine maps (query, k) to ranked node ids
Engine = Callable[[BenchmarkQuery, int], list[str]]


@dataclass
class EvalReport:
    engine_label: str
    k: int
    per_query: dict[str, tuple[int | None, float]]
    mrr: float
    n: int
    per_repo: dict[str, float] = field(default_factory=dict)

    @property
    def micro_mrr(self) -> float:
        return self.mrr

    @property
    def macro_mrr(self) -> float:
        """Mean of per-repository MRR values."""
        if not self.per_repo:
            return self.mrr
        return sum(self.per_repo.values()) / len(self.per_repo)

    def to_dict(self) -> dict:
        return {
            "engine": self.engine_label,
            "k": self.k,
            "n": self.n,
            "micro_mrr": self.mrr,
            "macro_mrr": self.macro_mrr,
            "per_repo": dict(sorted(self.per_repo.items())),
            "per_query": {qid: {"rank": rank, "reciprocal_rank": rr}
                          for qid, (rank, rr) in sorted(self.per_query.items())},
        }


def first_relevant_rank(ranked: Sequence[str], relevant: frozenset[str], k: int) -> int | None:
    for i, nid in enumerate(ranked[:k], 1):
        if nid in relevant:
            return i
    return None


def validate_benchmark(db: GraphDatabase, benchmark: Sequence[BenchmarkQuery]) -> None:
    seen: set[str] = set()
    for q in benchmark:
        if q.id in seen:
            raise PreconditionError(f"duplicate benchmark id {q.id!r}")
        seen.add(q.id)
        for rid in sorted(q.relevant_ids):
            if rid not in db:
                raise UnknownBenchmarkNode(f"query {q.id!r}: {rid} is not in the database")


def run_search_eval(db: GraphDatabase, engines: Sequence[tuple[str, Engine]],
                    benchmark: Sequence[BenchmarkQuery], k: int) -> list[EvalReport]:
    """One :class:`EvalReport` per engine, queries processed in id order."""
    if k < 1:
        raise PreconditionError("k must be >= 1")
    validate_benchmark(db, benchmark)
    ordered = sorted(benchmark, key=lambda q: q.id)
    reports = []
    for label, engine in engines:
        per_query: dict[str, tuple[int | None, float]] = {}
        by_repo: dict[str, list[int | None]] = defaultdict(list)
        for q in ordered:
            rank = first_relevant_rank(engine(q, k), q.relevant_ids, k)
            per_query[q.id] = (rank, reciprocal_rank(rank))
            by_repo[q.repo].append(rank)
        ranks = [per_query[q.id][0] for q in ordered]
        reports.append(EvalReport(
            label, k, per_query, mrr(ranks) if ranks else 0.0, len(ranks),
            {repo: mrr(r) for repo, r in sorted(by_repo.items())},
        ))
        logger.info("%s: MRR %.4f over %d queries", label, reports[-1].mrr, len(ranks))
    return reports


def format_table(reports: Sequence[EvalReport]) -> str:
    width = max([len("engine")] + [len(r.engine_label) for r in reports])
    lines = [f"{'engine':<{width}}  {'N':>4}  {'k':>3}  {'micro MRR':>9}  {'macro MRR':>9}"]
    for r in reports:
        lines.append(f"{r.engine_label:<{width}}  {r.n:>4}  {r.k:>3}  {r.mrr:>9.4f}  "
                     f"{r.macro_mrr:>9.4f}")
    return "\n".join(lines)


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    body = {"schema_version": REPORT_SCHEMA_VERSION, "reports": [r.to_dict() for r in reports]}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


# -- engines ------------------------------------------------------------------


def graph_engine(db: GraphDatabase, embedder: Embedder, decomposer: Decomposer) -> Engine:
    """Multi-level pipeline; module and signal queries use their own levels."""

    def run(q: BenchmarkQuery, k: int) -> list[str]:
        if q.level is Level.BLOCK:
            return [h.node_id for h in retrieve(db, embedder, decomposer, q.text, k).hits]
        if q.level is Level.MODULE:
            dq = decomposer.decompose(q.text)
            return [h.node_id for h in search_module(db, embedder, dq.module_query or q.text, k)]
        result = retrieve(db, embedder, decomposer, q.text, k)
        if result.signals:
            return [h.node_id for h in result.signals[:k]]
        return [h.node_id for h in search_signal(db, embedder, q.text, k)]

    return run


def lexical_engine(db: GraphDatabase, embedder: Embedder) -> Engine:
    """Plain cosine between the raw query and node code at the query's level."""

    def run(q: BenchmarkQuery, k: int) -> list[str]:
        if q.level is Level.MODULE:
            return [h.node_id for h in search_module(db, embedder, q.text, k)]
        if q.level is Level.BLOCK:
            return [h.node_id for h in search_block(db, embedder, q.text, k)]
        return [h.node_id for h in search_signal(db, embedder, q.text, k)]

    return run


def _level_documents(db: GraphDatabase, level: Level) -> list[tuple[str, list[str]]]:
    if level is Level.SIGNAL:
        # a signal's text is its name plus the code of every block touching it
        docs = []
        for node in db.find(NodeKind.SIGNAL):
            parts = [node.name]
            for bid in db.neighbors(node.id, EdgeKind.CONTAINS, Direction.IN):
                if db.node(bid).kind is NodeKind.BLOCK:
                    parts.append(db.node(bid).code)
            docs.append((node.id, tokenize_code("\n".join(parts))))
        return docs
    kind = NodeKind.MODULE if level is Level.MODULE else NodeKind.BLOCK
    return [(n.id, tokenize_code(n.code)) for n in db.find(kind) if n.code]


def bm25_engine(db: GraphDatabase) -> Engine:
    """Okapi BM25 over node code at the query's level."""
    cache: dict[Level, tuple[list[tuple[str, list[str]]], CorpusStats]] = {}

    def run(q: BenchmarkQuery, k: int) -> list[str]:
        if q.level not in cache:
            docs = _level_documents(db, q.level)
            cache[q.level] = (docs, CorpusStats.from_documents(t for _, t in docs))
        docs, stats = cache[q.level]
        query = tokenize_code(q.text)
        scored = sorted(((bm25_score(query, toks, stats), nid) for nid, toks in docs),
                        key=lambda t: (-t[0], t[1]))
        return [nid for _, nid in scored[:k]]

    return run
