from __future__ import annotations

import itertools
import json
import math
import string
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
import xxhash
from hypothesis import given, settings
from hypothesis import strategies as st

from hdlgraph.errors import DimensionMismatch, ProtocolError, TransportError
from hdlgraph.scoring import (
    CorpusStats,
    LexicalEmbedder,
    RemoteEmbedder,
    bm25_score,
    cosine,
    lexical_embed,
    remote_embed,
    split_identifier,
    tokenize_code,
)

idents = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True)
vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=4, max_size=4)


def test_tokenize_examples():
    assert tokenize_code("assign data_out = dataIn;") == [
        "assign", "data_out", "data", "out", "datain", "data", "in"]
    assert tokenize_code("") == []
    assert tokenize_code("// comment only") == []
    assert tokenize_code("x = 8'hFF + 3; /* gone */") == ["x", "8'hff", "3"]


def test_split_identifier():
    assert split_identifier("HTTPServer_rx2") == ["http", "server", "rx", "2"]
    assert split_identifier("__") == []


def test_lexical_embed_examples():
    a = lexical_embed("assign y = a & b;")
    assert cosine(a, lexical_embed("assign y = a & b;")) == 1.0
    assert math.isclose(float(np.linalg.norm(a)), 1.0)
    assert not lexical_embed("").any()


def _bucket(token: str) -> int:
    # the fixed hash, applied directly
    return xxhash.xxh64_intdigest(token.encode("utf-8"), seed=0) % 256


def test_disjoint_buckets_give_zero_cosine():
    # brute force over short identifiers for a pair that cannot collide
    for left, right in itertools.combinations(
            ("".join(p) for p in itertools.product(string.ascii_lowercase, repeat=3)), 2):
        if _bucket(left) != _bucket(right):
            break
    assert (left, right) == ("aaa", "aab")
    assert cosine(lexical_embed(left), lexical_embed(right)) == 0.0


def test_idf_weighting_changes_vector():
    stats = CorpusStats.from_documents([["a", "b"], ["a"], ["a", "c"]])
    plain = LexicalEmbedder().embed("a b")
    weighted = LexicalEmbedder(stats=stats).embed("a b")
    assert cosine(plain, weighted) < 1.0


def test_cosine_examples():
    v = [0.3, -1.0, 2.0]
    assert cosine(v, v) == pytest.approx(1.0)
    assert cosine([1, 0, 0], [0, 1, 0]) == 0.0
    assert cosine(v, [-x for x in v]) == pytest.approx(-1.0)
    assert cosine([0, 0], [1, 2]) == 0.0
    with pytest.raises(DimensionMismatch):
        cosine([1, 2], [1, 2, 3])


def test_bm25_examples():
    stats = CorpusStats.from_documents([["a"]])
    assert bm25_score(["b"], ["a"], stats) == 0.0
    # N = df = 1: ln((1 - 1 + 0.5)/(1 + 0.5) + 1) = ln(4/3); tf part is 2.2/2.2
    assert bm25_score(["a"], ["a"], stats) == pytest.approx(math.log(4 / 3), abs=1e-12)
    docs = [["a", "b", "a"], ["c", "b"], ["d"]]
    stats = CorpusStats.from_documents(docs)
    assert bm25_score(["a", "a"], docs[0], stats) == pytest.approx(
        2 * bm25_score(["a"], docs[0], stats))


def test_bm25_hand_value():
    docs = [["x", "y"], ["y", "z", "z", "w"]]
    stats = CorpusStats.from_documents(docs)
    idf = math.log((2 - 1 + 0.5) / (1 + 0.5) + 1)
    norm = 1.2 * (1 - 0.75 + 0.75 * 4 / 3)
    expected = idf * 2 * 2.2 / (2 + norm)
    assert bm25_score(["z"], docs[1], stats) == pytest.approx(expected, abs=1e-12)


@given(vectors, vectors)
def test_cosine_symmetric_and_bounded(a, b):
    c = cosine(a, b)
    assert c == cosine(b, a)
    assert abs(c) <= 1 + 1e-12
    if any(a):
        assert cosine(a, a) == pytest.approx(1.0)


@given(st.lists(idents, min_size=1, max_size=12), st.randoms())
def test_embedding_ignores_token_order(tokens, rnd):
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    emb = LexicalEmbedder()
    assert np.allclose(emb.embed(" ".join(tokens)), emb.embed(" ".join(shuffled)), atol=1e-12)


@given(st.lists(idents, min_size=1, max_size=6), st.integers(1, 5), idents)
def test_bm25_monotone_in_term_frequency(doc, extra, q):
    docs = [doc + [q], ["zz_other"]]
    more = doc + [q] * (1 + extra)
    stats_a = CorpusStats.from_documents(docs)
    base = bm25_score([q], docs[0], stats_a)
    assert base > 0
    # same length normalisation, more occurrences of q
    padded = docs[0] + ["pad_tok"] * extra
    stats_b = CorpusStats.from_documents([more, ["zz_other"]])
    stats_c = CorpusStats.from_documents([padded, ["zz_other"]])
    assert bm25_score([q], more, stats_b) >= bm25_score([q], padded, stats_c) - 1e-12


# -- remote embedding against a stub server ---------------------------------------


class _Stub:
    def __init__(self, respond):
        self.respond = respond
        self.requests: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append(body)
                status, payload = stub.respond(body)
                data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/embed"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def _echo(body):
    return 200, {"vectors": [[float(len(t)), 1.0] for t in body["texts"]]}


def test_remote_embed_in_order_and_batched():
    with _Stub(_echo) as stub:
        out = remote_embed(stub.url, ["a", "bbb", "cc"], batch_size=2)
    assert [v.tolist() for v in out] == [[1.0, 1.0], [3.0, 1.0], [2.0, 1.0]]
    assert [r["texts"] for r in stub.requests] == [["a", "bbb"], ["cc"]]


def test_remote_embed_empty_sends_nothing():
    with _Stub(_echo) as stub:
        assert remote_embed(stub.url, []) == []
    assert stub.requests == []


def test_remote_embed_ragged_is_protocol_error():
    def ragged(body):
        return 200, {"vectors": [[1.0, 2.0], [1.0]]}

    with _Stub(ragged) as stub, pytest.raises(ProtocolError):
        remote_embed(stub.url, ["a", "b"])


def test_remote_embed_bad_count_and_non_json():
    with _Stub(lambda body: (200, {"vectors": []})) as stub, pytest.raises(ProtocolError):
        remote_embed(stub.url, ["a"])
    with _Stub(lambda body: (200, "not json")) as stub, pytest.raises(ProtocolError):
        remote_embed(stub.url, ["a"])


def test_remote_embed_http_error_reports_batch():
    calls = []

    def fail_second(body):
        calls.append(1)
        return (500, {"error": "boom"}) if len(calls) == 2 else _echo(body)

    with _Stub(fail_second) as stub, pytest.raises(TransportError) as info:
        remote_embed(stub.url, ["a", "b", "c"], batch_size=2)
    assert info.value.batch_index == 1


def test_remote_embedder_dimension():
    with _Stub(_echo) as stub:
        emb = RemoteEmbedder(stub.url)
        assert emb.embed("xy").tolist() == [2.0, 1.0]
        assert emb.dim == 2


@settings(max_examples=50)
@given(st.text(max_size=60))
def test_embedding_is_normalised_or_zero(text):
    v = lexical_embed(text)
    n = float(np.linalg.norm(v))
    assert n == 0.0 or math.isclose(n, 1.0, rel_tol=1e-12)
