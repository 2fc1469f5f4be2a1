"""Dataflow-side retrieval: upstream traversal and structural embeddings.

``graph_embed`` is an untrained GraphSAGE-style encoder. Node features are
hashed from structure only (kind, degree buckets, port direction), then
``hops`` rounds of mean aggregation over upstream neighbours, each followed
by a fixed pseudorandom projection ``W`` and L2 normalization. Names never
enter the computation, so renamed but isomorphic dataflow graphs embed
identically.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import xxhash

from .diagnostics import Diagnostic
from .errors import (
    EmptyDatabase,
    EmptySeed,
    PreconditionError,
    UnparsableFragment,
    VerilogSyntaxError,
    WrongKind,
)
from .frontend import AstModule, parse_file
from .graph.builder import build_graph
from .graph.model import DFG_EDGE_KINDS, DFG_NODE_KINDS, EdgeKind, GraphNode, NodeKind
from .retrieval import Level, RetrievalHit
from .scoring import HASH_SEED, Embedder, cosine
from .store import Direction, GraphDatabase

logger = logging.getLogger(__name__)

DEFAULT_GRAPH_DIM = 64
DEFAULT_HOPS = 2
GRAPH_WEIGHT = 0.5
FRAGMENT_MODULE = "__fragment__"
FRAGMENT_PATH = "<fragment>"

_UPSTREAM_KINDS = tuple(sorted(DFG_EDGE_KINDS, key=lambda k: k.value))


def _require_dfg_node(db: GraphDatabase, node_id: str) -> GraphNode:
    node = db.node(node_id)
    if node.kind not in DFG_NODE_KINDS:
        raise WrongKind(f"{node_id} is a {node.kind.value}; expected SIGNAL or TEMP")
    return node


def upstream(db: GraphDatabase, node_id: str) -> list[str]:
    """Sources of dataflow edges into ``node_id``, deduplicated and sorted."""
    found: set[str] = set()
    for kind in _UPSTREAM_KINDS:
        found.update(db.neighbors(node_id, kind, Direction.IN))
    return sorted(found)


# -- traversal ------------------------------------------------------------------


@dataclass(frozen=True)
class TraversalResult:
    origin: str
    visited: tuple[tuple[str, int], ...]
    frontier_truncated: bool

    def ids(self) -> list[str]:
        return [nid for nid, _ in self.visited]


def signal_traverse(db: GraphDatabase, signal_id: str, max_hops: int) -> TraversalResult:
    """Breadth-first walk against dataflow edges, at most ``max_hops`` deep."""
    _require_dfg_node(db, signal_id)
    if max_hops < 1:
        raise PreconditionError("max_hops must be >= 1")
    visited: list[tuple[str, int]] = [(signal_id, 0)]
    seen = {signal_id}
    frontier = [signal_id]
    for hop in range(1, max_hops + 1):
        nxt = sorted({u for v in frontier for u in upstream(db, v)} - seen)
        if not nxt:
            return TraversalResult(signal_id, tuple(visited), False)
        seen.update(nxt)
        visited.extend((nid, hop) for nid in nxt)
        frontier = nxt
    truncated = any(u not in seen for v in frontier for u in upstream(db, v))
    return TraversalResult(signal_id, tuple(visited), truncated)


@dataclass(frozen=True)
class CandidateBlock:
    node_id: str
    code: str
    distance: int
    matched_signals: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "distance": self.distance,
                "matched_signals": list(self.matched_signals), "code": self.code}


@dataclass(frozen=True)
class CandidateSet:
    origin: str
    blocks: tuple[CandidateBlock, ...]
    signals_on_path: tuple[str, ...]
    frontier_truncated: bool = False

    @property
    def block_ids(self) -> list[str]:
        return [b.node_id for b in self.blocks]


def error_candidates(db: GraphDatabase, faulty_signal: str, max_hops: int) -> CandidateSet:
    """Blocks touching any signal upstream of ``faulty_signal``, nearest first."""
    trav = signal_traverse(db, faulty_signal, max_hops)
    signals = [(nid, d) for nid, d in trav.visited if db.node(nid).kind is NodeKind.SIGNAL]
    best: dict[str, int] = {}
    matched: dict[str, list[str]] = {}
    for sid, dist in signals:
        for bid in db.neighbors(sid, EdgeKind.CONTAINS, Direction.IN):
            if db.node(bid).kind is not NodeKind.BLOCK:
                continue
            best[bid] = min(best.get(bid, dist), dist)
            matched.setdefault(bid, []).append(sid)
    order = sorted(best, key=lambda b: (best[b], b))
    blocks = tuple(CandidateBlock(b, db.node(b).code, best[b], tuple(sorted(matched[b])))
                   for b in order)
    return CandidateSet(faulty_signal, blocks, tuple(s for s, _ in signals),
                        trav.frontier_truncated)


# -- structural embedding ----------------------------------------------------


def _degree_bucket(n: int) -> int:
    return 0 if n == 0 else 1 + int(math.log2(n))


def _hash_unit(key: str, dim: int) -> tuple[int, float]:
    h = xxhash.xxh64_intdigest(key.encode("utf-8"), seed=HASH_SEED)
    return h % dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)


def local_signature(db: GraphDatabase, node: GraphNode) -> list[str]:
    """Name-free descriptors of a dataflow node's local structure."""
    nid = node.id
    flow_in = len(db.neighbors(nid, EdgeKind.FLOWS_TO, Direction.IN))
    branch_in = len(db.neighbors(nid, EdgeKind.TRUE, Direction.IN)) + \
        len(db.neighbors(nid, EdgeKind.FALSE, Direction.IN))
    cond_in = len(db.neighbors(nid, EdgeKind.COND, Direction.IN))
    out = sum(len(db.neighbors(nid, k, Direction.OUT)) for k in _UPSTREAM_KINDS)
    parts = [
        f"kind={node.kind.value}",
        f"flow_in={_degree_bucket(flow_in)}",
        f"branch_in={_degree_bucket(branch_in)}",
        f"cond_in={_degree_bucket(cond_in)}",
        f"out={_degree_bucket(out)}",
    ]
    if node.kind is NodeKind.SIGNAL:
        parts.append(f"direction={node.attributes.get('direction', 'INTERNAL')}")
    return parts


def feature_terms(db: GraphDatabase, node: GraphNode) -> list[str]:
    """The node's whole local signature, hashed as one term.

    Per-descriptor terms would be shared by almost every node (most nodes
    are signals with one input) and wash out the difference between graphs;
    one joint term keeps different local shapes nearly orthogonal.
    """
    return ["sig=" + "|".join(local_signature(db, node))]


def node_feature(db: GraphDatabase, node: GraphNode | str, dim: int = DEFAULT_GRAPH_DIM
                 ) -> np.ndarray:
    """Signed hashed projection of :func:`feature_terms`, L2-normalized."""
    if isinstance(node, str):
        node = db.node(node)
    if node.kind not in DFG_NODE_KINDS:
        raise WrongKind(f"{node.id} is a {node.kind.value}; expected SIGNAL or TEMP")
    vec = np.zeros(dim, dtype=np.float64)
    for term in feature_terms(db, node):
        bucket, sign = _hash_unit(term, dim)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


@lru_cache(maxsize=8)
def projection_matrix(dim: int = DEFAULT_GRAPH_DIM) -> np.ndarray:
    """Fixed D×D matrix; entry (i, j) is XXH64("W:i:j") mapped to [-1, 1)."""
    w = np.empty((dim, dim), dtype=np.float64)
    for i in range(dim):
        for j in range(dim):
            h = xxhash.xxh64_intdigest(f"W:{i}:{j}".encode("ascii"), seed=HASH_SEED)
            w[i, j] = (h >> 11) / float(1 << 53) * 2.0 - 1.0
    w.setflags(write=False)
    return w


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


@dataclass(frozen=True)
class SubgraphEmbedding:
    vector: np.ndarray = field(compare=False)
    hops: int

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.vector)


def upstream_closure(db: GraphDatabase, seeds: Iterable[str], hops: int) -> set[str]:
    nodes = set(seeds)
    frontier = set(nodes)
    for _ in range(hops):
        frontier = {u for v in frontier for u in upstream(db, v)} - nodes
        if not frontier:
            break
        nodes |= frontier
    return nodes


def graph_embed(db: GraphDatabase, seed_nodes: Iterable[str], hops: int = DEFAULT_HOPS,
                dim: int = DEFAULT_GRAPH_DIM) -> SubgraphEmbedding:
    seeds = sorted(set(seed_nodes))
    if not seeds:
        raise EmptySeed("seed_nodes is empty")
    for nid in seeds:
        _require_dfg_node(db, nid)
    if hops < 0:
        raise PreconditionError("hops must be >= 0")
    members = sorted(upstream_closure(db, seeds, hops))
    index = {nid: i for i, nid in enumerate(members)}
    h = np.stack([node_feature(db, nid, dim) for nid in members])
    neigh = [[index[u] for u in upstream(db, nid) if u in index] for nid in members]
    w = projection_matrix(dim)
    for _ in range(hops):
        agg = np.stack([(h[i] + h[ns].sum(axis=0)) / (1 + len(ns)) for i, ns in enumerate(neigh)])
        h = agg @ w.T
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        h = np.divide(h, norms, out=np.zeros_like(h), where=norms > 0)
    out = _normalize(h[[index[s] for s in seeds]].mean(axis=0))
    return SubgraphEmbedding(out, hops)


# -- fragments and completion -----------------------------------------------------

_SALVAGE_WORD = re.compile(r"//[^\n]*|/\*.*?\*/|\"(?:\\.|[^\"\\])*\"|\b(begin|end|case[xz]?|endcase)\b",
                           re.DOTALL)


def _wrap(code: str) -> str:
    return f"module {FRAGMENT_MODULE};\n{code}\nendmodule\n"


def salvage(code: str) -> str | None:
    """Drop text after the last ``;`` and close any open begin/case."""
    cut = code.rfind(";")
    if cut < 0:
        return None
    head = code[: cut + 1]
    stack: list[str] = []
    for m in _SALVAGE_WORD.finditer(head):
        word = m.group(1)
        if word is None:
            continue
        if word == "begin" or word.startswith("case") and word != "endcase":
            stack.append("end" if word == "begin" else "endcase")
        elif stack and stack[-1] == word:
            stack.pop()
    return head + "".join(f"\n{closer}" for closer in reversed(stack))


def parse_fragment(code: str) -> tuple[AstModule, list[Diagnostic]]:
    """Parse a module-body fragment, salvaging a trailing incomplete statement."""
    diags: list[Diagnostic] = []
    try:
        modules = parse_file(_wrap(code), FRAGMENT_PATH)
    except VerilogSyntaxError as first:
        fixed = salvage(code)
        if fixed is None:
            raise UnparsableFragment(f"nothing salvageable: {first}") from first
        try:
            modules = parse_file(_wrap(fixed), FRAGMENT_PATH)
        except VerilogSyntaxError as exc:
            raise UnparsableFragment(f"fragment does not parse: {exc}") from exc
        diags.append(Diagnostic(FRAGMENT_PATH, first.line, "FRAGMENT_TRUNCATED",
                                f"dropped incomplete trailing statement ({first.message})"))
    if len(modules) != 1 or not modules[0].blocks:
        raise UnparsableFragment("fragment holds no statements")
    return modules[0], diags


def fragment_database(code: str) -> tuple[GraphDatabase, list[Diagnostic]]:
    module, diags = parse_fragment(code)
    graph = build_graph([module])
    return GraphDatabase(graph), diags


def fragment_embedding(code: str, hops: int = DEFAULT_HOPS, dim: int = DEFAULT_GRAPH_DIM
                       ) -> np.ndarray:
    db, _ = fragment_database(code)
    seeds = [n.id for kind in (NodeKind.SIGNAL, NodeKind.TEMP) for n in db.find(kind)]
    if not seeds:
        return np.zeros(dim, dtype=np.float64)
    return graph_embed(db, seeds, hops, dim).vector


def block_dfg_embedding(code: str, hops: int = DEFAULT_HOPS, dim: int = DEFAULT_GRAPH_DIM
                        ) -> np.ndarray:
    """Index-time embedding of one block's own dataflow; zero when unparsable."""
    try:
        return fragment_embedding(code, hops, dim)
    except (UnparsableFragment, EmptySeed):
        return np.zeros(dim, dtype=np.float64)


def completion_matches(db: GraphDatabase, embedder: Embedder, partial_code: str, k: int,
                       hops: int = DEFAULT_HOPS, graph_weight: float = GRAPH_WEIGHT
                       ) -> list[RetrievalHit]:
    """Indexed blocks most similar to ``partial_code`` in structure and text."""
    if k < 1:
        raise PreconditionError("k must be >= 1")
    blocks = [n for n in db.find(NodeKind.BLOCK) if n.embedding is not None]
    if not blocks:
        raise EmptyDatabase("database has no embedded BLOCK nodes")
    frag_db, diags = fragment_database(partial_code)
    for d in diags:
        logger.warning("%s: %s", d.code, d.message)
    seeds = [n.id for kind in (NodeKind.SIGNAL, NodeKind.TEMP) for n in frag_db.find(kind)]
    dim = len(blocks[0].dfg_embedding) if blocks[0].dfg_embedding else DEFAULT_GRAPH_DIM
    gvec = graph_embed(frag_db, seeds, hops, dim).vector if seeds else np.zeros(dim)
    lvec = embedder.embed(partial_code)
    scored = []
    for node in blocks:
        g = cosine(gvec, node.dfg_embedding) if node.dfg_embedding is not None else 0.0
        lex = cosine(lvec, node.embedding)
        scored.append((graph_weight * g + (1.0 - graph_weight) * lex, node.id))
    scored.sort(key=lambda t: (-t[0], t[1]))
    out = []
    for score, nid in scored[:k]:
        node = db.node(nid)
        mid = db.parent_module(nid)
        out.append(RetrievalHit(nid, Level.BLOCK, score, "completion", name=node.name,
                                code=node.code, module_id=mid,
                                module_name=db.node(mid).name if mid else None))
    return out
