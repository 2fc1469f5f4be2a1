from __future__ import annotations

import random
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import xxhash

from gen_verilog import random_repository
from hdlgraph.dataflow import (
    completion_matches,
    error_candidates,
    graph_embed,
    node_feature,
    parse_fragment,
    salvage,
    signal_traverse,
)
from hdlgraph.errors import (
    EmptyDatabase,
    EmptySeed,
    PreconditionError,
    UnknownNode,
    UnparsableFragment,
    WrongKind,
)
from hdlgraph.eval.synthetic import debug_cases
from hdlgraph.frontend.parser import parse_file
from hdlgraph.graph.builder import build_graph, index_repository
from hdlgraph.graph.model import CodeGraph, EdgeKind, NodeKind, block_id, module_id, signal_id
from hdlgraph.scoring import LexicalEmbedder
from hdlgraph.store import Direction, GraphDatabase
from oracles import dot_cosine

FIXTURES = Path(__file__).parent / "fixtures"


def _db(src: str, path: str = "d.v") -> GraphDatabase:
    return GraphDatabase(build_graph(parse_file(src, path)))


def _dfg_seeds(db: GraphDatabase) -> list[str]:
    return [n.id for kind in (NodeKind.SIGNAL, NodeKind.TEMP) for n in db.find(kind)]


CHAIN = "module m(input a, output c);\n  wire b;\n  assign b = a;\n  assign c = b;\nendmodule\n"


def test_traverse_chain():
    db = _db(CHAIN)
    a, b, c = (signal_id("d.v", "m", x) for x in "abc")
    two = signal_traverse(db, c, 2)
    assert list(two.visited) == [(c, 0), (b, 1), (a, 2)] and not two.frontier_truncated
    one = signal_traverse(db, c, 1)
    assert list(one.visited) == [(c, 0), (b, 1)] and one.frontier_truncated


def test_traverse_ternary():
    db = _db("module m(input s, input a, input b, output y);\n"
             "  assign y = s ? a : b;\nendmodule\n")
    res = signal_traverse(db, signal_id("d.v", "m", "y"), 2)
    (temp,) = db.find(NodeKind.TEMP)
    assert list(res.visited) == [(signal_id("d.v", "m", "y"), 0), (temp.id, 1)] + [
        (signal_id("d.v", "m", x), 2) for x in sorted("abs")]
    assert not res.frontier_truncated


def test_traverse_errors():
    db = _db(CHAIN)
    with pytest.raises(PreconditionError):
        signal_traverse(db, signal_id("d.v", "m", "c"), 0)
    with pytest.raises(WrongKind):
        signal_traverse(db, module_id("d.v", "m"), 1)
    with pytest.raises(UnknownNode):
        signal_traverse(db, signal_id("d.v", "m", "nope"), 1)


def test_traverse_terminates_on_cycles():
    db = _db("module m(input clk, output reg x);\n  reg y;\n"
             "  always @(posedge clk) x <= y;\n  always @(posedge clk) y <= x;\nendmodule\n")
    res = signal_traverse(db, signal_id("d.v", "m", "x"), 50)
    ids = res.ids()
    assert len(ids) == len(set(ids)) == 2 and not res.frontier_truncated


@pytest.mark.parametrize("seed", range(10))
def test_traverse_superset_and_ordering(seed):
    files = random_repository(random.Random(seed))
    db = GraphDatabase(build_graph(
        [m for p, t in sorted(files.items()) for m in parse_file(t, p)]))
    for sid in _dfg_seeds(db)[:20]:
        prev = set()
        for h in range(1, 5):
            res = signal_traverse(db, sid, h)
            dists = [d for _, d in res.visited]
            assert dists == sorted(dists) and res.visited[0] == (sid, 0)
            assert len(res.ids()) == len(set(res.ids()))
            for d in set(dists):
                at_d = [nid for nid, dd in res.visited if dd == d]
                assert at_d == sorted(at_d)
            assert prev <= set(res.ids())
            prev = set(res.ids())


# -- error candidates ---------------------------------------------------------------


def test_error_candidates_single_assign():
    db = _db("module top(input p, input q, output s, output t);\n"
             "  assign s = p & q;\n  assign t = p;\nendmodule\n"
             "module other(input u, output v);\n  assign v = ~u;\nendmodule\n")
    cs = error_candidates(db, signal_id("d.v", "top", "s"), 3)
    # s <- TEMP <- {p, q}; t's block reads p as well, two hops out
    assert cs.block_ids[0] == block_id("d.v", "top.assign", 0)
    assert cs.blocks[0].distance == 0 and cs.blocks[0].code == "assign s = p & q;"
    assert block_id("d.v", "other.assign", 0) not in cs.block_ids
    cs1 = error_candidates(db, signal_id("d.v", "top", "s"), 1)
    assert cs1.block_ids == [block_id("d.v", "top.assign", 0)]


def test_error_candidates_no_upstream():
    db = _db("module m(input a, output x, output y);\n"
             "  assign x = a;\n  assign y = ~a;\nendmodule\n")
    cs = error_candidates(db, signal_id("d.v", "m", "a"), 2)
    assert cs.block_ids == [block_id("d.v", "m.assign", 0), block_id("d.v", "m.assign", 1)]
    assert all(b.distance == 0 for b in cs.blocks)
    assert cs.signals_on_path == (signal_id("d.v", "m", "a"),)


def test_error_candidates_precondition():
    with pytest.raises(PreconditionError):
        error_candidates(_db(CHAIN), signal_id("d.v", "m", "c"), 0)


def test_every_candidate_block_touches_the_path(repo3_db):
    for sig in repo3_db.find(NodeKind.SIGNAL)[:25]:
        cs = error_candidates(repo3_db, sig.id, 3)
        path = set(cs.signals_on_path)
        for b in cs.blocks:
            assert set(b.matched_signals) <= path and b.matched_signals


def test_reset_fanout_characterization():
    # a faulty register two stages behind the observed output: reset and clock
    # reach every sibling instance, so those blocks join the set at deeper hops
    case = next(c for c in debug_cases() if c.name == "pipeline1")
    with tempfile.TemporaryDirectory() as tmp:
        case.write(tmp)
        db = GraphDatabase(index_repository(tmp, LexicalEmbedder()))
    cs = error_candidates(db, case.faulty_signal, 3)
    assert case.faulty_block in cs.block_ids[:3]
    instances = [b for b in cs.blocks if db.node(b.node_id).attributes["block_type"] == "instance"]
    assert instances and all(b.distance >= 2 for b in instances)
    assert len(cs.blocks) <= len(db.find(NodeKind.BLOCK)) // 2


# -- structural embedding ------------------------------------------------------


def test_node_feature_examples():
    db = _db("module m(input a, input b, output y);\n  assign y = a & b;\nendmodule\n")
    a, b = signal_id("d.v", "m", "a"), signal_id("d.v", "m", "b")
    assert np.array_equal(node_feature(db, a), node_feature(db, b))
    renamed = _db("module m(input zz, input b, output y);\n  assign y = zz & b;\nendmodule\n")
    assert np.array_equal(node_feature(db, a), node_feature(renamed, signal_id("d.v", "m", "zz")))
    with pytest.raises(WrongKind):
        node_feature(db, module_id("d.v", "m"))


def test_node_feature_signal_and_temp_differ():
    # an internal wire and a TEMP, each with two inputs and one output
    db = _db("module m(input a, input b, input c, output y, output z);\n  wire w;\n"
             "  assign w = a | b;\n  assign y = w;\n  assign z = a & c;\nendmodule\n")
    (temp,) = [n for n in db.find(NodeKind.TEMP)
               if signal_id("d.v", "m", "z") in db.neighbors(n.id, EdgeKind.FLOWS_TO)]
    db2 = _db("module m(input a, input b, output y);\n  wire w;\n"
              "  assign w = a;\n  always @(*) w = b;\n  assign y = w;\nendmodule\n")
    wire = db2.node(signal_id("d.v", "m", "w"))
    assert len(db2.neighbors(wire.id, EdgeKind.FLOWS_TO, Direction.IN)) == 2
    assert not np.array_equal(node_feature(db, temp), node_feature(db2, wire))


def _oracle_w(dim: int) -> np.ndarray:
    w = np.empty((dim, dim))
    for i in range(dim):
        for j in range(dim):
            h = xxhash.xxh64_intdigest(f"W:{i}:{j}".encode(), seed=0)
            w[i, j] = (h >> 11) / 2.0 ** 53 * 2.0 - 1.0
    return w


@pytest.mark.parametrize("hops", [0, 1, 2, 3])
def test_isolated_signal_embedding(hops):
    db = _db("module m(input lonely);\nendmodule\n")
    sid = signal_id("d.v", "m", "lonely")
    vec = node_feature(db, sid, 16)
    w = _oracle_w(16)
    for _ in range(hops):
        vec = w @ vec
        vec = vec / np.linalg.norm(vec)
    got = graph_embed(db, [sid], hops, 16).vector
    assert np.allclose(got, vec, atol=1e-12)
    other = _db("module q(input other_name);\nendmodule\n", "q.v")
    assert np.array_equal(got, graph_embed(other, [signal_id("q.v", "q", "other_name")],
                                           hops, 16).vector)


def _fixture_embedding(name: str) -> np.ndarray:
    db = GraphDatabase(build_graph(parse_file((FIXTURES / "dfg" / f"{name}.v").read_text(),
                                              f"{name}.v")))
    return graph_embed(db, _dfg_seeds(db)).vector


@pytest.mark.parametrize("name", ["counter", "mux4", "adder_chain"])
def test_renamed_copies_embed_identically(name):
    a, b = _fixture_embedding(name), _fixture_embedding(f"{name}_renamed")
    assert np.allclose(a, b, atol=1e-12)
    assert dot_cosine(a, b) == pytest.approx(1.0, abs=1e-12)


def test_embedding_ignores_insertion_order():
    src = (FIXTURES / "dfg" / "fsm.v").read_text()
    db = GraphDatabase(build_graph(parse_file(src, "fsm.v")))
    g = db.graph
    shuffled = GraphDatabase(CodeGraph(dict(reversed(list(g.nodes.items()))),
                                       list(reversed(g.edges)), []))
    seeds = _dfg_seeds(db)
    assert np.array_equal(graph_embed(db, seeds).vector,
                          graph_embed(shuffled, list(reversed(seeds))).vector)


def test_graph_embed_errors(repo3_db):
    with pytest.raises(EmptySeed):
        graph_embed(repo3_db, [])
    with pytest.raises(WrongKind):
        graph_embed(repo3_db, [module_id("alu.v", "alu")])


def test_graph_embed_is_unit_norm(repo3_db):
    vec = graph_embed(repo3_db, _dfg_seeds(repo3_db)[:7]).vector
    assert np.isfinite(vec).all() and np.linalg.norm(vec) == pytest.approx(1.0)


# -- fragments and completion -------------------------------------------------------


PARTIAL_SHIFT = ("  always @(posedge clk) begin\n"
                 "    if (rst) sr <= 4'd0;\n"
                 "    else sr <= {sr[2:0], din")


def test_salvage_examples():
    assert salvage("assign a = b;\nassign c =") == "assign a = b;"
    assert salvage(PARTIAL_SHIFT) == ("  always @(posedge clk) begin\n"
                                      "    if (rst) sr <= 4'd0;\nend")
    assert salvage("case (s) 1: x = y; // begin\n") == "case (s) 1: x = y;\nendcase"
    assert salvage("no statements here") is None


def test_parse_fragment_reports_truncation():
    module, diags = parse_fragment(PARTIAL_SHIFT)
    assert [d.code for d in diags] == ["FRAGMENT_TRUNCATED"]
    assert len(module.blocks) == 1
    _, clean = parse_fragment("assign y = a;")
    assert clean == []


def test_completion_partial_shift_register(shift_db, embedder):
    hits = completion_matches(shift_db, embedder, PARTIAL_SHIFT, 3)
    shift_block = block_id("shift.v", "shifter.always", 0)
    adder = block_id("shift.v", "shifter.assign", 2)
    ids = [h.node_id for h in hits]
    assert ids[0] == shift_block and ids.index(shift_block) < ids.index(adder)
    # recompute every score from stored vectors with an independent cosine
    frag_db = GraphDatabase(build_graph(parse_fragment(PARTIAL_SHIFT)[:1]))
    gvec = graph_embed(frag_db, _dfg_seeds(frag_db)).vector
    lvec = embedder.embed(PARTIAL_SHIFT)
    for h in hits:
        node = shift_db.node(h.node_id)
        want = 0.5 * dot_cosine(gvec, node.dfg_embedding) + 0.5 * dot_cosine(lvec, node.embedding)
        assert h.score == pytest.approx(want, abs=1e-12)


def test_completion_identical_fragment(shift_db, embedder):
    block = shift_db.node(block_id("shift.v", "shifter.always", 0))
    (hit,) = completion_matches(shift_db, embedder, block.code, 1)
    assert hit.node_id == block.id and hit.score == pytest.approx(1.0, abs=1e-12)


def test_completion_errors(shift_db, embedder):
    with pytest.raises(UnparsableFragment):
        completion_matches(shift_db, embedder, "always @(posedge clk) begin", 2)
    with pytest.raises(PreconditionError):
        completion_matches(shift_db, embedder, "assign q = sr;", 0)
    with pytest.raises(EmptyDatabase):
        completion_matches(GraphDatabase(build_graph([])), embedder, "assign q = sr;", 1)


def test_completion_with_zero_graph_embeddings_is_lexical(shift_db, embedder):
    g = shift_db.graph
    zeroed = {nid: replace(n, dfg_embedding=(0.0,) * 64) if n.kind is NodeKind.BLOCK else n
              for nid, n in g.nodes.items()}
    db = GraphDatabase(CodeGraph(zeroed, list(g.edges), []))
    hits = completion_matches(db, embedder, PARTIAL_SHIFT, 3)
    lvec = embedder.embed(PARTIAL_SHIFT)
    lexical = sorted(((dot_cosine(lvec, n.embedding), n.id) for n in db.find(NodeKind.BLOCK)),
                     key=lambda t: (-t[0], t[1]))
    assert [h.node_id for h in hits] == [nid for _, nid in lexical]
    assert [h.score for h in hits] == pytest.approx([0.5 * s for s, _ in lexical], abs=1e-12)
