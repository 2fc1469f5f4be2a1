"""Multi-level retrieval over the code view.

Pipeline: decompose the query into module/block/signal parts, take the
top ``K0 = max(k, 10)`` modules and blocks by cosine similarity, keep the
(module, block) pairs joined by a CONTAINS edge, rank them by the mean of the
two scores and, when a signal part is present, move blocks holding a
matching signal ahead of the rest.
"""

from __future__ import annotations

import json
import logging
import re
import urllib.error
import urllib.request
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from .errors import (
    EmptyDatabase,
    EmptyQuery,
    PreconditionError,
    ProviderError,
    UnknownLevelQuery,
)
from .graph.model import EdgeKind, NodeKind
from .scoring import Embedder, cosine, split_identifier, tokenize_code
from .store import Direction, GraphDatabase

logger = logging.getLogger(__name__)

MIN_CANDIDATES = 10


class Level(str, Enum):
    MODULE = "MODULE"
    BLOCK = "BLOCK"
    SIGNAL = "SIGNAL"


@dataclass(frozen=True)
class RetrievalHit:
    node_id: str
    level: Level
    score: float
    provenance: str
    name: str = ""
    code: str = ""
    module_id: str | None = None
    module_name: str | None = None
    signals: tuple[str, ...] = ()

    def sort_key(self) -> tuple[float, str]:
        return (-self.score, self.node_id)

    def to_dict(self) -> dict:
        out = {"node_id": self.node_id, "level": self.level.value, "score": self.score,
               "provenance": self.provenance, "name": self.name}
        if self.level is Level.BLOCK:
            out["code"] = self.code
        if self.module_id is not None:
            out["module_id"] = self.module_id
            out["module_name"] = self.module_name
        if self.signals:
            out["signals"] = list(self.signals)
        return out


def candidate_breadth(k: int, min_candidates: int = MIN_CANDIDATES) -> int:
    return max(k, min_candidates)


# -- decomposition ------------------------------------------------------------


@dataclass(frozen=True)
class DecomposedQuery:
    raw: str
    module_query: str | None = None
    block_query: str | None = None
    signal_query: str | None = None

    @property
    def block_only(self) -> bool:
        return not self.module_query and not self.signal_query

    def to_dict(self) -> dict:
        return {"raw": self.raw, "module": self.module_query or "",
                "block": self.block_query or "", "signal": self.signal_query or ""}


class Decomposer(Protocol):
    def decompose(self, raw: str) -> DecomposedQuery: ...


_STOPWORDS = frozenset(
    "a an the this that these those of in on at to for from by with and or is are be "
    "its it which what where when how all any each every some that's".split()
)
_WORD = r"[A-Za-z_][\w\-]*"
_MODULE_PATTERNS = [
    re.compile(rf"\b(?:in|of|inside|within|from)\s+the\s+((?:{_WORD}\s+){{0,4}}?{_WORD})\s+module\b",
               re.IGNORECASE),
    re.compile(r"\bmodule\s+`?([A-Za-z_]\w*)`?", re.IGNORECASE),
    re.compile(r"\b([A-Z][A-Za-z0-9_]*)\s+module\b"),
]
_SIGNAL_PATTERNS = [
    re.compile(r"\bsignals?\s+`?([A-Za-z_]\w*)`?", re.IGNORECASE),
    re.compile(r"\boutput\s+`?([A-Za-z_]\w*)`?", re.IGNORECASE),
    re.compile(r"`([A-Za-z_]\w*(?:\s*\[\s*\d+\s*(?::\s*\d+\s*)?\])?)`"),
]


def _extract(patterns: list[re.Pattern[str]], text: str) -> tuple[list[str], str]:
    found: list[str] = []
    for pattern in patterns:
        while True:
            hit = next((m for m in pattern.finditer(text)
                        if m.group(1).lower() not in _STOPWORDS), None)
            if hit is None:
                break
            found.append(hit.group(1))
            text = text[: hit.start()] + " " + text[hit.end():]
    return found, text


def decompose_rule_based(raw: str) -> DecomposedQuery:
    """Split ``raw`` with fixed surface patterns; see module docs for the rules."""
    if not raw or not raw.strip():
        raise EmptyQuery("query is empty")
    modules, rest = _extract(_MODULE_PATTERNS, raw)
    signals, rest = _extract(_SIGNAL_PATTERNS, rest)
    block = " ".join(rest.split())
    if not (modules or signals) or not block:
        block = raw.strip()
    return DecomposedQuery(
        raw=raw,
        module_query=" ".join(modules) or None,
        block_query=block,
        signal_query=" ".join(signals) or None,
    )


class RuleBasedDecomposer:
    name = "rule_based"

    def decompose(self, raw: str) -> DecomposedQuery:
        return decompose_rule_based(raw)


DECOMPOSER_PROMPT = (
    "Split the hardware code search query into three parts: the module it refers to, "
    "the behavior of the code block it asks for, and the signal it names. Reply with a "
    'JSON object {"module": ..., "block": ..., "signal": ...} using empty strings for '
    "absent parts.\nQuery: {query}"
)


class RemoteDecomposer:
    """Decomposer backed by an HTTP endpoint.

    Request ``{"query": raw, "prompt": <template filled in>}``; the response
    must be ``{"module": str, "block": str, "signal": str}``.
    """

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 30.0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout

    def decompose(self, raw: str) -> DecomposedQuery:
        if not raw or not raw.strip():
            raise EmptyQuery("query is empty")
        payload = {"query": raw, "prompt": DECOMPOSER_PROMPT.replace("{query}", raw)}
        req = urllib.request.Request(self.endpoint, data=json.dumps(payload).encode("utf-8"),
                                     headers={"Content-Type": "application/json"},
                                     method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"decomposer endpoint failed: {exc}") from exc
        if not isinstance(body, dict) or not all(
                isinstance(body.get(key, ""), str) for key in ("module", "block", "signal")):
            raise ProviderError("decomposer response must hold string fields")
        block = body.get("block", "").strip() or raw.strip()
        return DecomposedQuery(raw, body.get("module", "").strip() or None, block,
                               body.get("signal", "").strip() or None)


# -- per-level search -----------------------------------------------------------


def _require_query(q: str | None) -> str:
    if q is None or not q.strip():
        raise UnknownLevelQuery("level query is empty")
    return q


def _require_k(k: int) -> None:
    if k < 1:
        raise PreconditionError("k must be >= 1")


def score_nodes(db: GraphDatabase, embedder: Embedder, q: str, kind: NodeKind
                ) -> list[tuple[float, str]]:
    """(score, id) for every embedded node of ``kind``, best first."""
    query_vec = embedder.embed(q)
    scored = [(cosine(query_vec, n.embedding), n.id) for n in db.find(kind)
              if n.embedding is not None]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored


def _embedded(db: GraphDatabase, kind: NodeKind) -> bool:
    return any(n.embedding is not None for n in db.find(kind))


def _check_db(db: GraphDatabase) -> None:
    if not _embedded(db, NodeKind.BLOCK) and not _embedded(db, NodeKind.MODULE):
        raise EmptyDatabase("database has no embedded MODULE or BLOCK nodes")


def _module_hit(db: GraphDatabase, score: float, nid: str, provenance: str) -> RetrievalHit:
    return RetrievalHit(nid, Level.MODULE, score, provenance, name=db.node(nid).name)


def _block_hit(db: GraphDatabase, score: float, nid: str, provenance: str,
               signals: tuple[str, ...] = ()) -> RetrievalHit:
    node = db.node(nid)
    mid = db.parent_module(nid)
    return RetrievalHit(nid, Level.BLOCK, score, provenance, name=node.name, code=node.code,
                        module_id=mid, module_name=db.node(mid).name if mid else None,
                        signals=signals)


def search_module(db: GraphDatabase, embedder: Embedder, q: str, k: int) -> list[RetrievalHit]:
    _require_k(k)
    _check_db(db)
    scored = score_nodes(db, embedder, _require_query(q), NodeKind.MODULE)
    return [_module_hit(db, s, nid, "module") for s, nid in scored[:k]]


def search_block(db: GraphDatabase, embedder: Embedder, q: str, k: int) -> list[RetrievalHit]:
    _require_k(k)
    _check_db(db)
    scored = score_nodes(db, embedder, _require_query(q), NodeKind.BLOCK)
    return [_block_hit(db, s, nid, "block") for s, nid in scored[:k]]


def search_signal(db: GraphDatabase, embedder: Embedder, q: str, k: int) -> list[RetrievalHit]:
    """Signals ranked by the cross-level rule, using ``q`` for both levels."""
    _require_k(k)
    breadth = candidate_breadth(k)
    pairs = filter_pairs(db, search_module(db, embedder, q, breadth),
                         search_block(db, embedder, q, breadth))
    return rerank_signals(db, pairs, None, k)


def search_module_block(db: GraphDatabase, embedder: Embedder, module_q: str, block_q: str,
                        k: int) -> list[RetrievalHit]:
    """Blocks scored by ``block_q`` inside the top-k modules for ``module_q``."""
    modules = search_module(db, embedder, module_q, k)
    allowed = {b for m in modules for b in db.neighbors(m.node_id, EdgeKind.CONTAINS)}
    scored = [t for t in score_nodes(db, embedder, _require_query(block_q), NodeKind.BLOCK)
              if t[1] in allowed]
    return [_block_hit(db, s, nid, "module_block") for s, nid in scored[:k]]


def search_module_signal(db: GraphDatabase, embedder: Embedder, module_q: str, signal_q: str,
                         k: int) -> list[RetrievalHit]:
    """Signals of the top-k modules for ``module_q``, scored by name against ``signal_q``."""
    modules = search_module(db, embedder, module_q, k)
    query_vec = embedder.embed(_require_query(signal_q))
    scored = []
    for m in modules:
        for nid in db.neighbors(m.node_id, EdgeKind.CONTAINS):
            node = db.node(nid)
            if node.kind is NodeKind.SIGNAL:
                scored.append((cosine(query_vec, embedder.embed(node.name)), nid, m))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [RetrievalHit(nid, Level.SIGNAL, s, "module_signal", name=db.node(nid).name,
                         module_id=m.node_id, module_name=m.name)
            for s, nid, m in scored[:k]]


# -- cross-level steps ----------------------------------------------------------


@dataclass(frozen=True)
class Pair:
    module: RetrievalHit
    block: RetrievalHit

    @property
    def score(self) -> float:
        return (self.module.score + self.block.score) / 2.0


def filter_pairs(db: GraphDatabase, module_hits: Sequence[RetrievalHit],
                 block_hits: Sequence[RetrievalHit]) -> list[Pair]:
    """(module, block) hit pairs joined by a CONTAINS edge, best mean score first."""
    modules = {m.node_id: m for m in module_hits}
    pairs = []
    for b in block_hits:
        for mid in db.neighbors(b.node_id, EdgeKind.CONTAINS, Direction.IN):
            if mid in modules:
                pairs.append(Pair(modules[mid], b))
    pairs.sort(key=lambda p: (-p.score, p.block.node_id, p.module.node_id))
    return pairs


def signal_matches(name: str, signal_query: str) -> bool:
    """Whole name, or all of its sub-tokens, among the query's tokens."""
    tokens = set(tokenize_code(signal_query))
    parts = set(split_identifier(name))
    return name.lower() in tokens or bool(parts) and parts <= tokens


def rerank_signals(db: GraphDatabase, pairs: Sequence[Pair], signal_query: str | None,
                   k: int | None) -> list[RetrievalHit]:
    """Score each contained signal by the mean score of the pairs holding it."""
    sums: dict[str, list[float]] = defaultdict(list)
    for p in pairs:
        for sid in db.neighbors(p.block.node_id, EdgeKind.CONTAINS):
            if db.node(sid).kind is NodeKind.SIGNAL:
                sums[sid].append(p.score)
    hits = []
    for sid, scores in sums.items():
        node = db.node(sid)
        if signal_query and not signal_matches(node.name, signal_query):
            continue
        mid = db.parent_module(sid)
        hits.append(RetrievalHit(sid, Level.SIGNAL, sum(scores) / len(scores), "signal_rerank",
                                 name=node.name, module_id=mid,
                                 module_name=db.node(mid).name if mid else None))
    hits.sort(key=RetrievalHit.sort_key)
    return hits if k is None else hits[:k]


@dataclass
class RetrievalResult:
    query: DecomposedQuery
    hits: list[RetrievalHit]
    candidates: list[RetrievalHit] = field(default_factory=list)
    signals: list[RetrievalHit] = field(default_factory=list)
    fallback: bool = False


def retrieve_candidates(db: GraphDatabase, embedder: Embedder, query: DecomposedQuery, k: int,
                        min_candidates: int = MIN_CANDIDATES
                        ) -> tuple[list[RetrievalHit], list[RetrievalHit]]:
    """Full ranked candidate list before truncation, plus the surviving signals."""
    breadth = candidate_breadth(k, min_candidates)
    module_hits = search_module(db, embedder, query.module_query or query.raw, breadth)
    block_hits = search_block(db, embedder, query.block_query or query.raw, breadth)
    pairs = filter_pairs(db, module_hits, block_hits)
    signals: list[RetrievalHit] = []
    boosted: dict[str, tuple[str, ...]] = {}
    if query.signal_query:
        signals = rerank_signals(db, pairs, query.signal_query, None)
        by_block: dict[str, list[str]] = defaultdict(list)
        surviving = {s.node_id for s in signals}
        for p in pairs:
            for sid in db.neighbors(p.block.node_id, EdgeKind.CONTAINS):
                if sid in surviving:
                    by_block[p.block.node_id].append(db.node(sid).name)
        boosted = {bid: tuple(sorted(names)) for bid, names in by_block.items()}
    candidates = []
    for p in pairs:
        bid = p.block.node_id
        provenance = "signal_boost" if bid in boosted else "pair"
        candidates.append(_block_hit(db, p.score, bid, provenance, boosted.get(bid, ())))
    candidates.sort(key=lambda h: (h.node_id not in boosted, -h.score, h.node_id))
    return candidates, signals


def retrieve(db: GraphDatabase, embedder: Embedder, decomposer: Decomposer, raw_query: str,
             k: int, min_candidates: int = MIN_CANDIDATES) -> RetrievalResult:
    """Decompose, search each level, filter by containment, rerank; top-k blocks."""
    _require_k(k)
    if not raw_query or not raw_query.strip():
        raise EmptyQuery("query is empty")
    _check_db(db)
    query = decomposer.decompose(raw_query)
    if query.block_only:
        hits = search_block(db, embedder, query.block_query or raw_query, k)
        return RetrievalResult(query, hits, fallback=True)
    candidates, signals = retrieve_candidates(db, embedder, query, k, min_candidates)
    if not candidates:
        hits = search_block(db, embedder, query.block_query or raw_query, k)
        return RetrievalResult(query, hits, signals=signals, fallback=True)
    hits = candidates[:k]
    if len(hits) < k:
        # keep the fallback guarantee: never fewer hits than plain block search
        seen = {h.node_id for h in hits}
        for h in search_block(db, embedder, query.block_query or raw_query, k):
            if len(hits) >= k:
                break
            if h.node_id not in seen:
                hits.append(RetrievalHit(h.node_id, h.level, h.score, "fallback", h.name,
                                         h.code, h.module_id, h.module_name))
    return RetrievalResult(query, hits, candidates, signals)
