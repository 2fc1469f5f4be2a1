from __future__ import annotations

from pathlib import Path

import pytest

from hdlgraph.graph.builder import index_repository
from hdlgraph.scoring import LexicalEmbedder
from hdlgraph.store import GraphDatabase

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def embedder() -> LexicalEmbedder:
    return LexicalEmbedder()


@pytest.fixture(scope="session")
def repo3_db(embedder) -> GraphDatabase:
    return GraphDatabase(index_repository(FIXTURES / "repo3", embedder))


@pytest.fixture(scope="session")
def shift_db(embedder) -> GraphDatabase:
    return GraphDatabase(index_repository(FIXTURES / "shift", embedder))
