"""Typed nodes and edges of the hybrid code/hardware graph."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from ..diagnostics import Diagnostic
from ..frontend.ast import SourceSpan

EXTERNAL_FILE = "<external>"


class NodeKind(str, Enum):
    MODULE = "MODULE"
    BLOCK = "BLOCK"
    SIGNAL = "SIGNAL"
    TEMP = "TEMP"


class EdgeKind(str, Enum):
    CONTAINS = "CONTAINS"
    INSTANTIATE = "INSTANTIATE"
    FLOWS_TO = "FLOWS_TO"
    TRUE = "TRUE"
    FALSE = "FALSE"
    COND = "COND"


DFG_EDGE_KINDS = frozenset({EdgeKind.FLOWS_TO, EdgeKind.TRUE, EdgeKind.FALSE, EdgeKind.COND})
DFG_NODE_KINDS = frozenset({NodeKind.SIGNAL, NodeKind.TEMP})


def module_id(file: str, name: str, ordinal: int = 0) -> str:
    return f"MODULE:{file}:{name}:{ordinal}"


def block_id(file: str, qualified_name: str, ordinal: int) -> str:
    return f"BLOCK:{file}:{qualified_name}:{ordinal}"


def signal_id(file: str, module_key: str, name: str) -> str:
    return f"SIGNAL:{file}:{module_key}.{name}:0"


def temp_id(file: str, module_key: str, ordinal: int) -> str:
    return f"TEMP:{file}:{module_key}:{ordinal}"


def id_ordinal(node_id: str) -> int:
    return int(node_id.rsplit(":", 1)[1])


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: NodeKind
    name: str
    attributes: dict[str, str] = field(default_factory=dict)
    embedding: tuple[float, ...] | None = None
    span: SourceSpan | None = None
    # per-block dataflow embedding, used for completion matching
    dfg_embedding: tuple[float, ...] | None = None

    @property
    def code(self) -> str:
        return self.attributes.get("code", "")


@dataclass(frozen=True, order=True)
class GraphEdge:
    src: str
    dst: str
    kind: EdgeKind

    def sort_key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.kind.value)


_CONTAINS_OK = {
    NodeKind.MODULE: {NodeKind.BLOCK, NodeKind.SIGNAL},
    NodeKind.BLOCK: {NodeKind.SIGNAL},
}


def edge_violation(edge: GraphEdge, nodes: dict[str, GraphNode]) -> str | None:
    """Describe why ``edge`` breaks endpoint typing, or ``None`` if it is fine."""
    src, dst = nodes.get(edge.src), nodes.get(edge.dst)
    if src is None or dst is None:
        return f"dangling endpoint in {edge}"
    if edge.kind is EdgeKind.CONTAINS:
        if dst.kind not in _CONTAINS_OK.get(src.kind, set()):
            return f"CONTAINS {src.kind.value}->{dst.kind.value}"
    elif edge.kind is EdgeKind.INSTANTIATE:
        if not (src.kind is NodeKind.BLOCK and src.attributes.get("block_type") == "instance"
                and dst.kind is NodeKind.MODULE):
            return f"INSTANTIATE {src.kind.value}->{dst.kind.value}"
    elif src.kind not in DFG_NODE_KINDS or dst.kind not in DFG_NODE_KINDS:
        return f"{edge.kind.value} {src.kind.value}->{dst.kind.value}"
    return None


@dataclass
class CodeGraph:
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def add_node(self, node: GraphNode) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    def add_edge(self, src: str, dst: str, kind: EdgeKind) -> None:
        self.edges.append(GraphEdge(src, dst, kind))

    def merge(self, other: CodeGraph) -> None:
        for node in other.nodes.values():
            self.add_node(node)
        self.edges.extend(other.edges)
        self.diagnostics.extend(other.diagnostics)

    def violations(self) -> list[str]:
        """Every broken structural invariant, as human-readable strings."""
        problems = [v for e in self.edges if (v := edge_violation(e, self.nodes))]
        parents: Counter[str] = Counter()
        for e in self.edges:
            if e.kind is EdgeKind.CONTAINS and self.nodes.get(e.src) is not None \
                    and self.nodes[e.src].kind is NodeKind.MODULE:
                parents[e.dst] += 1
        for node in self.nodes.values():
            if node.kind in (NodeKind.BLOCK, NodeKind.SIGNAL) and parents[node.id] != 1:
                problems.append(f"{node.id} has {parents[node.id]} MODULE parents")
            if node.kind is NodeKind.BLOCK:
                if node.attributes.get("block_type") not in ("always", "assign", "initial",
                                                             "instance"):
                    problems.append(f"{node.id} has bad block_type")
                if not node.attributes.get("code"):
                    problems.append(f"{node.id} has empty code")
            if node.kind is NodeKind.TEMP and ("code" in node.attributes or node.embedding):
                problems.append(f"{node.id} TEMP carries code or embedding")
        return problems
