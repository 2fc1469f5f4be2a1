"""Shared helpers for tests that need a small indexed repository."""

from __future__ import annotations

from pathlib import Path

from hdlgraph.graph.builder import index_repository
from hdlgraph.scoring import LexicalEmbedder
from hdlgraph.store import GraphDatabase


def write_sources(root: Path, files: dict[str, str]) -> Path:
    for rel, text in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return root


def index_sources(root: Path, files: dict[str, str], embedder=None) -> GraphDatabase:
    write_sources(root, files)
    return GraphDatabase(index_repository(root, embedder or LexicalEmbedder()))
