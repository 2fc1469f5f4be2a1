from __future__ import annotations

import json
import math
import tempfile
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdlgraph.errors import DomainError, EmptyInput, FormatError, PreconditionError, UnknownBenchmarkNode
from hdlgraph.eval import (
    BenchmarkQuery,
    PassAtKInput,
    bm25_engine,
    code_tokens,
    format_table,
    graph_engine,
    lexical_engine,
    load_benchmark,
    loads_benchmark,
    mrr,
    pass_at_k,
    reports_to_json,
    rouge_l,
    rouge_n,
    run_search_eval,
    save_benchmark,
)
from hdlgraph.eval.synthetic import vocab_mismatch_suite
from hdlgraph.graph.builder import index_repository
from hdlgraph.graph.model import block_id, module_id
from hdlgraph.retrieval import Level, RuleBasedDecomposer
from hdlgraph.store import GraphDatabase
from oracles import pass_at_k_enumerated


def test_mrr_examples():
    assert mrr([1, 1, 1]) == 1.0
    assert mrr([1, 2, 4]) == pytest.approx(7 / 12, abs=1e-12)
    assert mrr([None, None]) == 0.0
    with pytest.raises(EmptyInput):
        mrr([])


@given(st.lists(st.one_of(st.none(), st.integers(1, 50)), min_size=1, max_size=20))
def test_mrr_bounds_and_monotonicity(ranks):
    base = mrr(ranks)
    assert 0.0 <= base <= 1.0
    assert mrr(ranks + [1]) >= base - 1e-12
    assert mrr(ranks + [None]) <= base + 1e-12


def test_rouge_n_examples():
    toks = ["assign", "a", "b"]
    assert rouge_n(toks, toks)[2] == 1.0
    p, r, f = rouge_n(["assign", "a", "c"], toks, 1)
    assert (p, r, f) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-12)
    assert rouge_n(["x"], ["y"]) == (0.0, 0.0, 0.0)
    assert rouge_n([], []) == (0.0, 0.0, 0.0)


def test_rouge_bigram_hand_table():
    # pred bigrams: (a,b) (b,a) (a,b); ref: (a,b) (b,c); clipped overlap 1
    p, r, f = rouge_n(list("aba") + ["b"], ["a", "b", "c"], 2)
    assert (p, r) == pytest.approx((1 / 3, 1 / 2))
    assert f == pytest.approx(2 * (1 / 3) * (1 / 2) / (1 / 3 + 1 / 2), abs=1e-12)


def test_rouge_l_examples():
    assert rouge_l(["a", "b"], ["a", "b"])[2] == 1.0
    p, r, f = rouge_l(["a", "x", "b"], ["a", "b"])
    assert (p, r, f) == pytest.approx((2 / 3, 1.0, 0.8), abs=1e-12)
    assert rouge_l([], ["a"]) == (0.0, 0.0, 0.0)


def test_code_tokens():
    assert code_tokens("assign y=a<=b;") == ["assign", "y", "=", "a", "<=", "b", ";"]
    assert code_tokens("x = 8'hFF;") == ["x", "=", "8'hFF", ";"]


def test_pass_at_k_examples():
    assert pass_at_k(10, 10, 1) == 1.0
    assert pass_at_k(2, 1, 1) == 0.5
    assert pass_at_k(PassAtKInput(5, 2, 2)) == pytest.approx(0.7, abs=1e-12)
    assert pass_at_k(5, 0, 3) == 0.0
    for bad in [(3, 4, 1), (3, 1, 0), (3, 1, 4), (3, -1, 1)]:
        with pytest.raises(DomainError):
            pass_at_k(*bad)


def test_pass_at_k_matches_enumeration():
    for n in range(1, 13):
        for c in range(n + 1):
            for k in range(1, n + 1):
                want = pass_at_k_enumerated(n, c, k)
                assert abs(pass_at_k(n, c, k) - float(want)) <= 1e-9


def test_pass_at_k_large_n_uses_product_form():
    n, c, k = 5000, 7, 10
    exact = 1 - Fraction(math.comb(n - c, k), math.comb(n, k))
    assert pass_at_k(n, c, k) == pytest.approx(float(exact), abs=1e-12)


@given(st.integers(1, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n),
                                                        st.integers(1, n))))
def test_pass_at_k_monotone(args):
    n, c, k = args
    v = pass_at_k(n, c, k)
    assert 0.0 <= v <= 1.0
    if k < n:
        assert pass_at_k(n, c, k + 1) >= v - 1e-12
    if c < n:
        assert pass_at_k(n, c + 1, k) >= v - 1e-12


# -- benchmark format ---------------------------------------------------------------


def test_benchmark_round_trip(tmp_path):
    qs = [BenchmarkQuery("b", Level.BLOCK, "the adder", frozenset({"BLOCK:a.v:m.assign:0"}), "r"),
          BenchmarkQuery("a", Level.MODULE, "alu", frozenset({"MODULE:a.v:m:0"}))]
    path = tmp_path / "bench.json"
    save_benchmark(qs, path)
    loaded = load_benchmark(path)
    assert [q.id for q in loaded] == ["a", "b"] and set(loaded) == set(qs)
    again = tmp_path / "again.json"
    save_benchmark(loaded, again)
    assert path.read_bytes() == again.read_bytes()


def test_benchmark_validation():
    with pytest.raises(PreconditionError):
        BenchmarkQuery("x", Level.BLOCK, "t", frozenset())
    with pytest.raises(PreconditionError):
        BenchmarkQuery("x", Level.BLOCK, "t", frozenset({"MODULE:a.v:m:0"}))
    with pytest.raises(FormatError):
        loads_benchmark("{}")
    with pytest.raises(FormatError):
        loads_benchmark('[{"id": "x"}]')
    with pytest.raises(FormatError):
        loads_benchmark("nope")


# -- harness --------------------------------------------------------------------


ALU = module_id("alu.v", "alu")


def test_perfect_engine_scores_one(repo3_db):
    bench = [BenchmarkQuery("q1", Level.MODULE, "alu", frozenset({ALU}), "r"),
             BenchmarkQuery("q0", Level.BLOCK, "y",
                            frozenset({block_id("alu.v", "alu.always", 2)}), "r")]

    def oracle(q, k):
        return sorted(q.relevant_ids)

    def never(q, k):
        return []

    good, bad = run_search_eval(repo3_db, [("oracle", oracle), ("never", never)], bench, 5)
    assert good.mrr == 1.0 and good.n == 2 and list(good.per_query) == ["q0", "q1"]
    assert bad.mrr == 0.0 and bad.per_query["q0"] == (None, 0.0)
    table = format_table([good, bad])
    assert "oracle" in table and "never" in table
    body = json.loads(reports_to_json([good, bad]))
    assert body["schema_version"] == 1
    assert [r["engine"] for r in body["reports"]] == ["oracle", "never"]


def test_rank_beyond_k_counts_as_miss(repo3_db):
    bench = [BenchmarkQuery("q", Level.MODULE, "alu", frozenset({ALU}))]

    def late(q, k):
        return ["MODULE:x:y:0"] * 3 + [ALU]

    (rep,) = run_search_eval(repo3_db, [("late", late)], bench, 3)
    assert rep.per_query["q"] == (None, 0.0)
    (rep,) = run_search_eval(repo3_db, [("late", late)], bench, 4)
    assert rep.per_query["q"] == (4, 0.25)


def test_harness_errors(repo3_db):
    ghost = [BenchmarkQuery("q", Level.MODULE, "x", frozenset({"MODULE:gone.v:gone:0"}))]
    with pytest.raises(UnknownBenchmarkNode):
        run_search_eval(repo3_db, [("e", lambda q, k: [])], ghost, 5)
    dup = [BenchmarkQuery("q", Level.MODULE, "x", frozenset({ALU}))] * 2
    with pytest.raises(PreconditionError):
        run_search_eval(repo3_db, [("e", lambda q, k: [])], dup, 5)
    with pytest.raises(PreconditionError):
        run_search_eval(repo3_db, [], dup[:1], 0)


def test_macro_mrr_averages_repositories(repo3_db):
    bench = [BenchmarkQuery("a", Level.MODULE, "x", frozenset({ALU}), "r1"),
             BenchmarkQuery("b", Level.MODULE, "x", frozenset({ALU}), "r1"),
             BenchmarkQuery("c", Level.MODULE, "x", frozenset({ALU}), "r2")]

    def first_only(q, k):
        return [ALU] if q.id == "a" else []

    (rep,) = run_search_eval(repo3_db, [("e", first_only)], bench, 1)
    assert rep.micro_mrr == pytest.approx(1 / 3)
    assert rep.macro_mrr == pytest.approx((0.5 + 0.0) / 2)


def test_synthetic_suite_graph_beats_bm25(embedder):
    suite = vocab_mismatch_suite()
    assert len(suite.queries) >= 20
    with tempfile.TemporaryDirectory() as tmp:
        suite.write(tmp)
        db = GraphDatabase(index_repository(tmp, embedder))
    engines = [("graph", graph_engine(db, embedder, RuleBasedDecomposer())),
               ("lexical", lexical_engine(db, embedder)), ("bm25", bm25_engine(db))]
    graph, lexical, bm25 = run_search_eval(db, engines, suite.queries, 10)
    assert graph.mrr > bm25.mrr and graph.mrr > lexical.mrr
