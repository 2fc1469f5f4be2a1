"""Similarity machinery: code tokenizer, hashed lexical embedder, cosine, BM25.

The lexical embedder hashes tokens with XXH64 (seed 0) into ``dim`` buckets,
weights each distinct token by ``1 + ln(tf)`` (times BM25-style idf when
corpus statistics are supplied) and L2-normalizes the result. It stands in
for a neural code encoder; :class:`RemoteEmbedder` is the hook for one.
"""

from __future__ import annotations

import json
import logging
import math
import re
import urllib.error
import urllib.request
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
import xxhash

from .errors import DimensionMismatch, ProtocolError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_DIM = 256
HASH_SEED = 0
BM25_K1 = 1.2
BM25_B = 0.75
REMOTE_BATCH = 64

_COMMENT_RE = re.compile(r"//[^\n]*|/\*.*?\*/", re.DOTALL)
_TOKEN_RE = re.compile(
    r"[0-9]*'[sS]?[bodhBODH][0-9a-fA-FxXzZ_?]+"  # based literal
    r"|[A-Za-z_][A-Za-z0-9_]*"
    r"|[0-9][0-9_]*(?:\.[0-9]+)?"
)
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def split_identifier(word: str) -> list[str]:
    """Underscore and camelCase pieces of ``word``, lowercased."""
    parts: list[str] = []
    for chunk in word.split("_"):
        if chunk:
            parts.extend(p.lower() for p in _CAMEL_RE.findall(chunk))
    return parts


def tokenize_code(text: str) -> list[str]:
    """Lowercased identifier, keyword and number tokens.

    Identifiers that split at underscores or camelCase boundaries contribute
    the whole identifier followed by its pieces. Comments and punctuation
    are dropped.
    """
    out: list[str] = []
    for m in _TOKEN_RE.finditer(_COMMENT_RE.sub(" ", text)):
        word = m.group()
        if not (word[0].isalpha() or word[0] == "_"):
            out.append(word.lower())
            continue
        out.append(word.lower())
        parts = split_identifier(word)
        if len(parts) > 1:
            out.extend(parts)
    return out


def token_bucket(token: str, dim: int, seed: int = HASH_SEED) -> int:
    return xxhash.xxh64_intdigest(token.encode("utf-8"), seed=seed) % dim


@dataclass(frozen=True)
class CorpusStats:
    doc_count: int
    avg_doc_len: float
    doc_freq: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_documents(cls, docs: Iterable[Sequence[str]]) -> CorpusStats:
        docs = list(docs)
        df: Counter[str] = Counter()
        total = 0
        for tokens in docs:
            total += len(tokens)
            df.update(set(tokens))
        n = len(docs)
        return cls(n, total / n if n else 0.0, dict(df))

    def idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return math.log((self.doc_count - df + 0.5) / (df + 0.5) + 1.0)


def bm25_score(query_tokens: Sequence[str], doc_tokens: Sequence[str], stats: CorpusStats,
               k1: float = BM25_K1, b: float = BM25_B) -> float:
    """Okapi BM25; repeated query tokens count once per occurrence."""
    if not doc_tokens:
        return 0.0
    tf = Counter(doc_tokens)
    norm = k1 * (1.0 - b + b * len(doc_tokens) / stats.avg_doc_len)
    score = 0.0
    for q in query_tokens:
        f = tf.get(q, 0)
        if f:
            score += stats.idf(q) * f * (k1 + 1.0) / (f + norm)
    return score


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension {a.shape} vs {b.shape}")
    sa = float(np.max(np.abs(a))) if a.size else 0.0
    sb = float(np.max(np.abs(b))) if b.size else 0.0
    if sa == 0.0 or sb == 0.0:
        return 0.0
    # rescale first so tiny or huge entries neither underflow nor overflow
    a, b = a / sa, b / sb
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    value = float(np.dot(a, b)) / (na * nb)
    return max(-1.0, min(1.0, value))


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class LexicalEmbedder:
    """Deterministic hashed TF(-IDF) embedder."""

    name = "lexical"

    def __init__(self, dim: int = DEFAULT_DIM, stats: CorpusStats | None = None,
                 seed: int = HASH_SEED) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.stats = stats
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        return self.embed_tokens(tokenize_code(text))

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        if not tokens:
            return vec
        for token, count in sorted(Counter(tokens).items()):
            weight = 1.0 + math.log(count)
            if self.stats is not None:
                weight *= self.stats.idf(token)
            vec[token_bucket(token, self.dim, self.seed)] += weight
        norm = float(np.sqrt(np.dot(vec, vec)))
        return vec / norm if norm > 0 else vec

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


def lexical_embed(text: str, dim: int = DEFAULT_DIM,
                  stats: CorpusStats | None = None) -> np.ndarray:
    return LexicalEmbedder(dim, stats).embed(text)


def _post_json(endpoint: str, payload: dict, timeout: float) -> dict:
    req = urllib.request.Request(
        endpoint, data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST",
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def remote_embed(endpoint: str, texts: Sequence[str], *, batch_size: int = REMOTE_BATCH,
                 timeout: float = 30.0) -> list[np.ndarray]:
    """Embed ``texts`` through an HTTP endpoint speaking ``{"texts"}``/``{"vectors"}``."""
    out: list[np.ndarray] = []
    dim: int | None = None
    for index, start in enumerate(range(0, len(texts), batch_size)):
        batch = list(texts[start : start + batch_size])
        try:
            body = _post_json(endpoint, {"texts": batch}, timeout)
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise TransportError(str(exc), batch_index=index) from exc
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not JSON: {exc}", batch_index=index) from exc
        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(batch):
            raise ProtocolError("expected one vector per text", batch_index=index)
        for vec in vectors:
            if not isinstance(vec, list) or not vec:
                raise ProtocolError("vector must be a nonempty list", batch_index=index)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ProtocolError(f"ragged dimensions {dim} vs {len(vec)}",
                                    batch_index=index)
            arr = np.asarray(vec, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ProtocolError("non-finite vector entry", batch_index=index)
            out.append(arr)
    return out


class RemoteEmbedder:
    name = "remote"

    def __init__(self, endpoint: str, dim: int | None = None, timeout: float = 30.0) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self._dim = dim

    @property
    def dim(self) -> int:
        if self._dim is None:
            self._dim = len(self.embed(""))
        return self._dim

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors = remote_embed(self.endpoint, texts, timeout=self.timeout)
        if vectors and self._dim is None:
            self._dim = len(vectors[0])
        if vectors and len(vectors[0]) != self._dim:
            raise ProtocolError(f"provider dimension changed to {len(vectors[0])}")
        return vectors
