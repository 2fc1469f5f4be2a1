"""Embedded graph store with typed lookups and the ``.hdlg`` file format.

File layout (UTF-8, one JSON object per line, keys sorted, no spaces)::

    {"diagnostic_count":D,"edge_count":E,"format_version":1,"node_count":N}
    N node records, sorted by id
    E edge records, sorted by (src, dst, kind)
    D diagnostic records, sorted

Floats go through ``repr`` so every embedding value round-trips bit-exactly.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from enum import Enum
from pathlib import Path

from .diagnostics import Diagnostic
from .errors import FormatError, UnknownNode, VersionError, WrongKind
from .frontend.ast import SourceSpan
from .graph.model import CodeGraph, EdgeKind, GraphEdge, GraphNode, NodeKind, id_ordinal

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Direction(str, Enum):
    OUT = "OUT"
    IN = "IN"


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True,
                      allow_nan=False)


def node_record(node: GraphNode) -> dict:
    return {
        "id": node.id,
        "kind": node.kind.value,
        "name": node.name,
        "attributes": dict(node.attributes),
        "embedding": list(node.embedding) if node.embedding is not None else None,
        "dfg_embedding": list(node.dfg_embedding) if node.dfg_embedding is not None else None,
        "span": node.span.to_dict() if node.span is not None else None,
    }


def _vector(value) -> tuple[float, ...] | None:
    if value is None:
        return None
    if not isinstance(value, list):
        raise TypeError("embedding must be an array")
    return tuple(float(x) for x in value)


def node_from_record(rec: dict) -> GraphNode:
    attrs = rec["attributes"]
    if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
        raise TypeError("attributes must map strings to strings")
    return GraphNode(
        id=rec["id"],
        kind=NodeKind(rec["kind"]),
        name=rec["name"],
        attributes=dict(attrs),
        embedding=_vector(rec.get("embedding")),
        span=SourceSpan.from_dict(rec["span"]) if rec.get("span") else None,
        dfg_embedding=_vector(rec.get("dfg_embedding")),
    )


class GraphDatabase:
    """Read-mostly wrapper around a :class:`CodeGraph` with derived indexes."""

    format_version = FORMAT_VERSION

    def __init__(self, graph: CodeGraph) -> None:
        self.graph = graph
        self.rebuild_indexes()

    def rebuild_indexes(self) -> None:
        by_kind: dict[NodeKind, list[str]] = defaultdict(list)
        by_name: dict[tuple[NodeKind, str], list[str]] = defaultdict(list)
        for nid in sorted(self.graph.nodes):
            node = self.graph.nodes[nid]
            by_kind[node.kind].append(nid)
            by_name[(node.kind, node.name)].append(nid)
        adjacency: dict[tuple[str, EdgeKind, Direction], set[str]] = defaultdict(set)
        for e in self.graph.edges:
            adjacency[(e.src, e.kind, Direction.OUT)].add(e.dst)
            adjacency[(e.dst, e.kind, Direction.IN)].add(e.src)
        self.by_kind = dict(by_kind)
        self.by_name = dict(by_name)
        self.adjacency = {key: sorted(ids) for key, ids in adjacency.items()}

    # -- queries -------------------------------------------------------------

    def node(self, node_id: str) -> GraphNode:
        try:
            return self.graph.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node {node_id!r}") from None

    def __contains__(self, node_id: object) -> bool:
        return node_id in self.graph.nodes

    def __len__(self) -> int:
        return len(self.graph.nodes)

    def neighbors(self, node_id: str, kind: EdgeKind, direction: Direction | str = Direction.OUT
                  ) -> list[str]:
        self.node(node_id)
        return list(self.adjacency.get((node_id, EdgeKind(kind), Direction(direction)), ()))

    def find(self, kind: NodeKind | str, name: str | None = None) -> list[GraphNode]:
        kind = NodeKind(kind)
        ids = self.by_kind.get(kind, []) if name is None else self.by_name.get((kind, name), [])
        return [self.graph.nodes[i] for i in ids]

    def _contained(self, module_id: str, kind: NodeKind) -> list[GraphNode]:
        node = self.node(module_id)
        if node.kind is not NodeKind.MODULE:
            raise WrongKind(f"{module_id} is a {node.kind.value}, not a MODULE")
        out = [self.graph.nodes[i] for i in self.neighbors(module_id, EdgeKind.CONTAINS)
               if self.graph.nodes[i].kind is kind]
        if kind is NodeKind.BLOCK:
            out.sort(key=lambda n: (id_ordinal(n.id), n.id))
        else:
            out.sort(key=lambda n: (n.span.byte_start if n.span else 1 << 62, n.id))
        return out

    def blocks_of(self, module_id: str) -> list[GraphNode]:
        """BLOCK children of a module in source order."""
        return self._contained(module_id, NodeKind.BLOCK)

    def signals_of(self, module_id: str) -> list[GraphNode]:
        """SIGNAL children of a module in declaration order; placeholders last."""
        return self._contained(module_id, NodeKind.SIGNAL)

    def parent_module(self, node_id: str) -> str | None:
        for src in self.neighbors(node_id, EdgeKind.CONTAINS, Direction.IN):
            if self.graph.nodes[src].kind is NodeKind.MODULE:
                return src
        return None

    # -- structural equality ---------------------------------------------------

    def canonical_lines(self) -> list[str]:
        nodes = [self.graph.nodes[i] for i in sorted(self.graph.nodes)]
        edges = sorted(self.graph.edges, key=GraphEdge.sort_key)
        diags = sorted(self.graph.diagnostics)
        header = {"format_version": FORMAT_VERSION, "node_count": len(nodes),
                  "edge_count": len(edges), "diagnostic_count": len(diags)}
        lines = [_dumps(header)]
        lines.extend(_dumps(node_record(n)) for n in nodes)
        lines.extend(_dumps({"src": e.src, "dst": e.dst, "kind": e.kind.value}) for e in edges)
        lines.extend(_dumps(d.to_dict()) for d in diags)
        return lines

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphDatabase):
            return NotImplemented
        return self.canonical_lines() == other.canonical_lines()

    __hash__ = None  # type: ignore[assignment]

    # -- persistence -------------------------------------------------------------

    def dumps(self) -> str:
        return "\n".join(self.canonical_lines()) + "\n"

    def save(self, path: str | os.PathLike[str]) -> None:
        """Write atomically: a temp file in the same directory, then rename."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())
        os.replace(tmp, path)

    @classmethod
    def loads(cls, text: str) -> GraphDatabase:
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise FormatError("empty file", 1)

        def record(i: int) -> dict:
            if i >= len(lines):
                raise FormatError("file truncated", i + 1)
            try:
                rec = json.loads(lines[i])
            except json.JSONDecodeError as exc:
                raise FormatError(f"malformed record: {exc.msg}", i + 1) from None
            if not isinstance(rec, dict):
                raise FormatError("record is not an object", i + 1)
            return rec

        header = record(0)
        if "format_version" not in header:
            raise FormatError("missing format_version", 1)
        if header["format_version"] != FORMAT_VERSION:
            raise VersionError(f"unsupported format_version {header['format_version']!r}; "
                               f"expected {FORMAT_VERSION}")
        try:
            n_nodes = int(header["node_count"])
            n_edges = int(header["edge_count"])
            n_diags = int(header.get("diagnostic_count", 0))
        except (KeyError, TypeError, ValueError):
            raise FormatError("header counts missing or invalid", 1) from None
        expected = 1 + n_nodes + n_edges + n_diags
        if len(lines) > expected:
            raise FormatError(f"unexpected record beyond the {expected} declared", expected + 1)
        graph = CodeGraph()
        for i in range(1, 1 + n_nodes):
            try:
                node = node_from_record(record(i))
                graph.add_node(node)
            except FormatError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad node record: {exc}", i + 1) from None
        for i in range(1 + n_nodes, 1 + n_nodes + n_edges):
            rec = record(i)
            try:
                edge = GraphEdge(rec["src"], rec["dst"], EdgeKind(rec["kind"]))
            except (KeyError, ValueError) as exc:
                raise FormatError(f"bad edge record: {exc}", i + 1) from None
            if edge.src not in graph.nodes or edge.dst not in graph.nodes:
                raise FormatError("edge endpoint not declared", i + 1)
            graph.edges.append(edge)
        for i in range(1 + n_nodes + n_edges, expected):
            rec = record(i)
            try:
                graph.diagnostics.append(Diagnostic(str(rec["file"]), int(rec["line"]),
                                                    str(rec["code"]), str(rec["message"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad diagnostic record: {exc}", i + 1) from None
        return cls(graph)

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> GraphDatabase:
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def save(db: GraphDatabase, path: str | os.PathLike[str]) -> None:
    db.save(path)


def load(path: str | os.PathLike[str]) -> GraphDatabase:
    return GraphDatabase.load(path)
