"""Turn parsed modules into the hybrid :class:`CodeGraph`."""

from __future__ import annotations

import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import TYPE_CHECKING

from ..diagnostics import Diagnostic
from ..errors import VerilogSyntaxError
from ..frontend import AstModule, BlockKind, list_repository_files, parse_file_with_diagnostics
from ..frontend.ast import (
    AstBlock,
    Assignment,
    Case,
    If,
    SystemTask,
    expr_identifiers,
    iter_statements,
    lvalue_index_identifiers,
    lvalue_targets,
)
from .dfg import PortDirections, build_dfg
from .model import (
    EXTERNAL_FILE,
    CodeGraph,
    EdgeKind,
    GraphNode,
    NodeKind,
    block_id,
    module_id,
    signal_id,
)

if TYPE_CHECKING:
    from ..scoring import Embedder

logger = logging.getLogger(__name__)


def _module_keys(modules: list[AstModule]) -> list[tuple[str, str]]:
    """(node id, id-prefix key) per module; repeats within one file get ordinals."""
    seen: dict[tuple[str, str], int] = defaultdict(int)
    out = []
    for m in modules:
        file = m.span.file_path
        ordinal = seen[(file, m.name)]
        seen[(file, m.name)] += 1
        key = m.name if ordinal == 0 else f"{m.name}#{ordinal}"
        out.append((module_id(file, m.name, ordinal), key))
    return out


def _block_qualifier(block: AstBlock) -> str:
    if block.kind is BlockKind.INSTANCE:
        return block.instance_name or "instance"
    return block.label or block.kind.value.lower()


def block_roles(block: AstBlock) -> tuple[list[str], list[str]]:
    """Names the block writes and names it reads, each sorted."""
    drives: set[str] = set()
    reads: set[str] = set()
    for item in block.sensitivity:
        reads.update(expr_identifiers(item.expr))
    for top in block.statements:
        for stmt in iter_statements(top):
            if isinstance(stmt, Assignment):
                drives.update(lvalue_targets(stmt.target))
                reads.update(lvalue_index_identifiers(stmt.target))
                reads.update(expr_identifiers(stmt.value))
            elif isinstance(stmt, If):
                reads.update(expr_identifiers(stmt.cond))
            elif isinstance(stmt, Case):
                reads.update(expr_identifiers(stmt.subject))
                for item in stmt.items:
                    for label in item.labels:
                        reads.update(expr_identifiers(label))
            elif isinstance(stmt, SystemTask):
                for arg in stmt.args:
                    reads.update(expr_identifiers(arg))
    if block.kind is BlockKind.INSTANCE:
        reads.update(block.referenced_signals)
    return sorted(drives), sorted(reads)


def _width_text(sig) -> str:
    if sig.width is not None:
        return f"{sig.width[0]}:{sig.width[1]}"
    return sig.raw_width or ""


def build_ast_graph(modules: list[AstModule]) -> CodeGraph:
    """Code view: MODULE/BLOCK/SIGNAL nodes with CONTAINS edges.

    INSTANTIATE edges are left to :func:`link_instantiations`.
    """
    graph = CodeGraph()
    first_file: dict[str, str] = {}
    for m, (mid, key) in zip(modules, _module_keys(modules)):
        file = m.span.file_path
        if m.name in first_file:
            graph.diagnostics.append(Diagnostic(
                file, m.span.line_start, "DUPLICATE_MODULE_NAME",
                f"module {m.name!r} already defined in {first_file[m.name]}"))
        else:
            first_file[m.name] = file
        graph.add_node(GraphNode(
            mid, NodeKind.MODULE, m.name,
            {"code": m.code, "file": file, "external": "false", "ports": ",".join(m.ports)},
            span=m.span,
        ))
        declared = {}
        for sig in m.signals:
            sid = signal_id(file, key, sig.name)
            declared[sig.name] = sid
            attrs = {"module": m.name, "file": file, "direction": sig.direction.value,
                     "net_kind": sig.net_kind.value, "width": _width_text(sig)}
            if sig.signed:
                attrs["signed"] = "true"
            graph.add_node(GraphNode(sid, NodeKind.SIGNAL, sig.name, attrs, span=sig.span))
        for ordinal, block in enumerate(m.blocks):
            bid = block_id(file, f"{key}.{_block_qualifier(block)}", ordinal)
            drives, reads = block_roles(block)
            attrs = {
                "block_type": block.kind.value.lower(),
                "code": block.code,
                "module": m.name,
                "file": file,
                "ordinal": str(ordinal),
                "drives": ",".join(drives),
                "reads": ",".join(reads),
            }
            if block.label:
                attrs["label"] = block.label
            if block.kind is BlockKind.INSTANCE:
                attrs["instance_of"] = block.instance_of or ""
                attrs["instance_name"] = block.instance_name or ""
            graph.add_node(GraphNode(bid, NodeKind.BLOCK, _block_qualifier(block), attrs,
                                     span=block.span))
            graph.add_edge(mid, bid, EdgeKind.CONTAINS)
            for name in sorted(block.referenced_signals):
                if name in declared:
                    graph.add_edge(bid, declared[name], EdgeKind.CONTAINS)
        for sig in m.signals:
            graph.add_edge(mid, declared[sig.name], EdgeKind.CONTAINS)
    return graph


def module_port_directions(modules: list[AstModule]) -> dict[str, dict[str, str]]:
    """Port directions of the first definition of each module name."""
    out: dict[str, dict[str, str]] = {}
    for m in modules:
        if m.name not in out:
            out[m.name] = {s.name: s.direction.value for s in m.port_signals}
    return out


def build_dfg_fragments(modules: list[AstModule], graph: CodeGraph,
                        port_directions: PortDirections | None = None) -> CodeGraph:
    """Merge every module's dataflow fragment into ``graph`` (in place)."""
    if port_directions is None:
        port_directions = module_port_directions(modules)
    for m, (mid, key) in zip(modules, _module_keys(modules)):
        file = m.span.file_path
        bids = [block_id(file, f"{key}.{_block_qualifier(b)}", i) for i, b in enumerate(m.blocks)]
        graph.merge(build_dfg(m, module_key=key, block_ids=bids, module_node_id=mid,
                              port_directions=port_directions))
    return graph


def link_instantiations(graph: CodeGraph) -> CodeGraph:
    """Add INSTANTIATE edges from instance blocks to their module definitions.

    Returns a new graph; the input is left untouched.
    """
    out = CodeGraph(dict(graph.nodes), list(graph.edges), list(graph.diagnostics))
    by_name: dict[str, list[str]] = defaultdict(list)
    for node in out.nodes.values():
        if node.kind is NodeKind.MODULE and node.attributes.get("external") != "true":
            by_name[node.name].append(node.id)
    already = {e.src for e in out.edges if e.kind is EdgeKind.INSTANTIATE}
    instance_blocks = sorted(
        n.id for n in out.nodes.values()
        if n.kind is NodeKind.BLOCK and n.attributes.get("block_type") == "instance"
    )
    for bid in instance_blocks:
        if bid in already:
            continue
        block = out.nodes[bid]
        target = block.attributes.get("instance_of", "")
        candidates = sorted(by_name.get(target, []))
        if not candidates:
            ext = module_id(EXTERNAL_FILE, target)
            if ext not in out.nodes:
                out.add_node(GraphNode(ext, NodeKind.MODULE, target,
                                       {"code": "", "file": EXTERNAL_FILE, "external": "true",
                                        "ports": ""}))
            dst = ext
        else:
            dst = candidates[0]
            if len(candidates) > 1:
                out.diagnostics.append(Diagnostic(
                    block.attributes.get("file", ""),
                    block.span.line_start if block.span else 0,
                    "AMBIGUOUS_MODULE",
                    f"{target!r} defined {len(candidates)} times; linked to {dst}"))
        out.add_edge(bid, dst, EdgeKind.INSTANTIATE)
    return out


def build_graph(modules: list[AstModule]) -> CodeGraph:
    """AST view + dataflow + instantiation links, without embeddings."""
    graph = build_ast_graph(modules)
    build_dfg_fragments(modules, graph)
    return link_instantiations(graph)


def _parse_one(args: tuple[str, str]) -> tuple[str, list[AstModule], list[Diagnostic]]:
    root, rel = args
    data = Path(root, rel).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        return rel, [], [Diagnostic(rel, 0, "ENCODING_ERROR", f"not UTF-8: {exc}")]
    try:
        result = parse_file_with_diagnostics(text, rel)
    except VerilogSyntaxError as exc:
        return rel, [], [Diagnostic(rel, exc.line, "SYNTAX_ERROR", str(exc))]
    return rel, result.modules, result.diagnostics


def index_repository(root: str | os.PathLike[str], embedder: Embedder, *, jobs: int = 1,
                     dfg_embeddings: bool = True, graph_dim: int = 64, hops: int = 2
                     ) -> CodeGraph:
    """Full indexing pipeline for one source tree.

    Files that fail to parse are skipped and reported as ``SYNTAX_ERROR``
    diagnostics. Every MODULE and BLOCK node gets an embedding of its code.
    """
    files = list_repository_files(root)
    work = [(str(root), rel) for rel in files]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parsed = list(pool.map(_parse_one, work))
    else:
        parsed = [_parse_one(w) for w in work]
    modules: list[AstModule] = []
    diagnostics: list[Diagnostic] = []
    for _rel, mods, diags in parsed:
        modules.extend(mods)
        diagnostics.extend(diags)
    graph = build_graph(modules)
    graph.diagnostics[:0] = diagnostics
    logger.info("indexed %d files, %d modules, %d nodes", len(files), len(modules),
                len(graph.nodes))
    return attach_embeddings(graph, embedder, dfg_embeddings=dfg_embeddings,
                             graph_dim=graph_dim, hops=hops)


def attach_embeddings(graph: CodeGraph, embedder: Embedder, *, dfg_embeddings: bool = True,
                      graph_dim: int = 64, hops: int = 2) -> CodeGraph:
    """Code embeddings on MODULE/BLOCK nodes; dataflow embeddings on BLOCKs."""
    ids = sorted(n.id for n in graph.nodes.values()
                 if n.kind in (NodeKind.MODULE, NodeKind.BLOCK))
    texts = [graph.nodes[i].code for i in ids]
    embed_many = getattr(embedder, "embed_many", None)
    vectors = embed_many(texts) if embed_many else [embedder.embed(t) for t in texts]
    nodes = dict(graph.nodes)
    for nid, vec in zip(ids, vectors):
        nodes[nid] = replace(nodes[nid], embedding=tuple(float(x) for x in vec))
    if dfg_embeddings:
        from ..dataflow import block_dfg_embedding

        for nid in ids:
            if nodes[nid].kind is NodeKind.BLOCK:
                vec = block_dfg_embedding(nodes[nid].code, hops, graph_dim)
                nodes[nid] = replace(nodes[nid], dfg_embedding=tuple(float(x) for x in vec))
    return CodeGraph(nodes, list(graph.edges), list(graph.diagnostics))
