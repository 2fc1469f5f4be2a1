"""Hybrid graph: code view (MODULE/BLOCK/SIGNAL) and hardware view (SIGNAL/TEMP)."""

from .builder import (
    attach_embeddings,
    build_ast_graph,
    build_graph,
    index_repository,
    link_instantiations,
    module_port_directions,
)
from .dfg import build_dfg
from .model import (
    DFG_EDGE_KINDS,
    CodeGraph,
    EdgeKind,
    GraphEdge,
    GraphNode,
    NodeKind,
)

__all__ = [
    "DFG_EDGE_KINDS",
    "CodeGraph",
    "EdgeKind",
    "GraphEdge",
    "GraphNode",
    "NodeKind",
    "attach_embeddings",
    "build_ast_graph",
    "build_dfg",
    "build_graph",
    "index_repository",
    "link_instantiations",
    "module_port_directions",
]
