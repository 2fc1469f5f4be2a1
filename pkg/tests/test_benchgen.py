from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdlgraph.benchgen import (
    CallableProvider,
    GeneratedQuery,
    RecordingProvider,
    Rejection,
    RepoEntry,
    RepoManifest,
    ReplayProvider,
    Scrubber,
    abstract_module,
    annotate_signals,
    describe_block,
    generate_benchmark,
    leaked_identifiers,
    load_manifest,
    prompt_key,
    refine,
    repo_names,
    scrub_names,
    write_outputs,
)
from hdlgraph.benchgen.pipeline import Category, parse_verdict
from hdlgraph.errors import EmptyGeneration, PreconditionError, ProviderError
from hdlgraph.eval import load_benchmark
from hdlgraph.graph.builder import index_repository
from hdlgraph.graph.model import block_id, module_id, signal_id
from hdlgraph.retrieval import Level
from hdlgraph.scoring import LexicalEmbedder
from hdlgraph.store import GraphDatabase
from helpers import index_sources
from scripted import respond

FIXTURES = Path(__file__).parent / "fixtures"

COUNTER_SRC = ("module c(input clk, input rst, output reg [3:0] count);\n"
               "  always @(posedge clk)\n"
               "    if (rst) count <= 4'd0;\n"
               "    else count <= 4'd5;\n"
               "  initial $display(\"hello\");\n"
               "endmodule\n")


@pytest.fixture
def counter_db(tmp_path):
    return index_sources(tmp_path, {"c.v": COUNTER_SRC})


def _recorded():
    return RecordingProvider(CallableProvider(respond))


# -- single steps -------------------------------------------------------------------


def test_describe_block_replay(counter_db):
    block = counter_db.node(block_id("c.v", "c.always", 0))
    rec = _recorded()
    text = describe_block(rec, block)
    assert text == "Logic that updates clk from rst and count."
    assert describe_block(ReplayProvider(rec.entries), block) == text
    with pytest.raises(ProviderError):
        describe_block(ReplayProvider({}), block)
    with pytest.raises(EmptyGeneration):
        describe_block(CallableProvider(lambda p: "  \n"), block)
    with pytest.raises(PreconditionError):
        describe_block(rec, counter_db.node(module_id("c.v", "c")))


def test_replay_keys_are_prompt_hashes():
    assert prompt_key("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert ReplayProvider({prompt_key("p"): "r"}).generate("p") == "r"


def test_annotate_signals_roles(counter_db):
    block = counter_db.node(block_id("c.v", "c.always", 0))
    notes = dict(annotate_signals(counter_db, block, "D."))
    # count is only assigned here; clk and rst are only read
    assert set(notes) == {signal_id("c.v", "c", n) for n in ("clk", "rst", "count")}
    assert notes[signal_id("c.v", "c", "count")].startswith("The signal produced")
    assert notes[signal_id("c.v", "c", "clk")].startswith("The signal consumed")
    assert len(set(notes.values())) == 2 and all(v.endswith(" D.") for v in notes.values())


def test_annotate_signals_both_and_empty(tmp_path):
    db = index_sources(tmp_path, {"r.v": "module r(input clk, output reg q);\n"
                                         "  always @(posedge clk) q <= ~q;\n"
                                         "  initial $display(\"x\");\nendmodule\n"})
    notes = dict(annotate_signals(db, db.node(block_id("r.v", "r.always", 0)), "D."))
    assert notes[signal_id("r.v", "r", "q")].startswith("The signal both")
    assert annotate_signals(db, db.node(block_id("r.v", "r.initial", 1)), "D.") == []


def test_abstract_module(counter_db):
    module = counter_db.node(module_id("c.v", "c"))
    rec = _recorded()
    text = abstract_module(rec, module, ["first.", "second."])
    assert text == "A unit made of 2 cooperating pieces of logic."
    assert abstract_module(ReplayProvider(rec.entries), module, ["first.", "second."]) == text
    with pytest.raises(PreconditionError):
        abstract_module(rec, module, [])

    def timeout(prompt):
        raise ProviderError("timed out")

    with pytest.raises(ProviderError) as info:
        abstract_module(CallableProvider(timeout), module, ["x"])
    assert module.id in str(info.value)


# -- scrubbing ------------------------------------------------------------------


def test_scrub_examples():
    scrub = Scrubber(["fifo_ctrl"], ["wr_en"])
    assert scrub("the fifo_ctrl module asserts wr_en") == "the module asserts the signal"
    assert scrub("The FifoCtrl block raises the wr en signal") == "the module raises the signal"
    assert scrub("nothing to see here.") == "nothing to see here."
    # sub-token awareness does not reach into unrelated words
    assert scrub("the wrench and enable") == "the wrench and enable"


def test_scrub_names_uses_repository_prefix(tmp_path):
    db = index_sources(tmp_path, {"a/x.v": "module alpha(input data_valid);\nendmodule\n",
                                  "b/y.v": "module beta(input ready);\nendmodule\n"})
    assert repo_names(db, RepoEntry("a", "a", Category.CPU)) == (["alpha"], ["data_valid"])
    assert scrub_names(db, "a/", "alpha sets data valid; beta waits") == \
        "the module sets the signal; beta waits"


names = st.lists(st.from_regex(r"[a-z]{2,5}(_[a-z]{2,4})?", fullmatch=True), min_size=1,
                 max_size=4)


@given(names, names, st.lists(st.sampled_from(["the", "module", "signal", "x", "of", "A_b",
                                                 "Fifo", "ctrl", ",", "wr"]), max_size=12))
def test_scrub_idempotent_and_complete(mods, sigs, filler):
    scrub = Scrubber(mods, sigs)
    words = filler + mods + sigs
    text = " ".join(words)
    once = scrub(text)
    assert scrub(once) == once
    assert leaked_identifiers(once, mods + sigs) == []


# -- refinement ---------------------------------------------------------------------


CAND = GeneratedQuery("BLOCK:f.v:m.always:0", Level.BLOCK, "desc", "Logic that ticks.", 0, "r")


def _verdicts(*answers):
    it = iter(answers)
    log = []

    def fn(prompt):
        log.append(prompt.split("\n", 1)[0])
        if prompt.startswith("# template regenerate"):
            return "reworded query"
        return next(it)

    return CallableProvider(fn), log


def test_refine_pass_first_round():
    provider, log = _verdicts("PASS")
    out = refine(provider, CAND, 3)
    assert isinstance(out, GeneratedQuery) and out.rounds_used == 1
    assert out.scrubbed_query == "Logic that ticks." and len(log) == 1


def test_refine_fail_all_rounds():
    provider, log = _verdicts("FAIL: a", "FAIL: b", "FAIL: c")
    out = refine(provider, CAND, 3)
    assert out == Rejection(CAND.target_id, Level.BLOCK, 3, "c")
    # judge, rewrite, judge, rewrite, judge: no rewrite after the last verdict
    assert [line.split()[2] for line in log] == ["judge", "regenerate"] * 2 + ["judge"]


def test_refine_pass_at_last_round():
    provider, _ = _verdicts("FAIL: a", "FAIL: b", "PASS")
    out = refine(provider, CAND, 3)
    assert isinstance(out, GeneratedQuery) and out.rounds_used == 3
    assert out.scrubbed_query == "reworded query"


def test_refine_reject_and_precondition():
    provider, _ = _verdicts("REJECT: hopeless")
    out = refine(provider, CAND, 5)
    assert isinstance(out, Rejection) and out.rounds_used == 1
    with pytest.raises(PreconditionError):
        refine(provider, CAND, 0)


def test_parse_verdict():
    assert parse_verdict("PASS") == ("PASS", "")
    assert parse_verdict("pass: fine") == ("PASS", "fine")
    assert parse_verdict("FAIL: vague") == ("FAIL", "vague")
    assert parse_verdict("hmm") == ("FAIL", "hmm")


# -- end to end ---------------------------------------------------------------------


def _two_repo_index(root: Path) -> GraphDatabase:
    shutil.copytree(FIXTURES / "repo3", root / "core")
    shutil.copytree(FIXTURES / "shift", root / "dsp")
    return GraphDatabase(index_repository(root, LexicalEmbedder()))


MANIFEST = RepoManifest((RepoEntry("core", "core", Category.CPU),
                         RepoEntry("dsp", "dsp", Category.FPGA_PROJECT),
                         RepoEntry("skip", "nowhere", Category.INTERCONNECTION, False)))


def test_generate_replay_is_deterministic(tmp_path):
    db = _two_repo_index(tmp_path / "src")
    rec = RecordingProvider(CallableProvider(respond))
    live = generate_benchmark(db, MANIFEST, rec, 3)
    write_outputs(live, tmp_path / "live.json")
    outs = []
    for i in range(2):
        report = generate_benchmark(db, MANIFEST, ReplayProvider(dict(rec.entries)), 3)
        write_outputs(report, tmp_path / f"replay{i}.json")
        outs.append((tmp_path / f"replay{i}.json").read_bytes())
    assert outs[0] == outs[1] == (tmp_path / "live.json").read_bytes()
    queries = load_benchmark(tmp_path / "live.json")
    assert len(queries) == len(live.accepted) and live.counts["BLOCK"] > 0
    assert {q.repo for q in queries} == {"core", "dsp"}
    for q in live.accepted:
        assert q.rounds_used == 2 or q.level is not Level.BLOCK
        modules, signals = repo_names(db, "core/" if q.repo == "core" else "dsp/")
        assert leaked_identifiers(q.scrubbed_query, modules + signals) == []
        if q.level is Level.SIGNAL:
            assert q.target_id in db.neighbors(q.source_block, "CONTAINS")
    review = (tmp_path / "live.json.review.md").read_text()
    assert review.startswith("# Benchmark review") and "- [ ] `" in review


def test_generate_resume_from_checkpoint(tmp_path):
    db = _two_repo_index(tmp_path / "src")
    rec = RecordingProvider(CallableProvider(respond))
    full = generate_benchmark(db, MANIFEST, rec, 3, checkpoint=tmp_path / "full.ckpt")
    write_outputs(full, tmp_path / "full.json")
    lines = (tmp_path / "full.ckpt").read_text().splitlines(keepends=True)
    # simulate a crash partway through, including a torn final line
    partial = tmp_path / "part.ckpt"
    partial.write_text("".join(lines[: len(lines) // 2]) + lines[len(lines) // 2][:10])
    calls = []

    def counting(prompt):
        calls.append(prompt)
        return ReplayProvider(rec.entries).generate(prompt)

    resumed = generate_benchmark(db, MANIFEST, CallableProvider(counting), 3, checkpoint=partial)
    write_outputs(resumed, tmp_path / "resumed.json")
    assert (tmp_path / "resumed.json").read_bytes() == (tmp_path / "full.json").read_bytes()
    assert 0 < len(calls) < len(rec.entries)


def test_generate_zero_repositories(tmp_path, caplog, repo3_db):
    manifest = RepoManifest((RepoEntry("x", "x", Category.CPU, False),))
    report = generate_benchmark(repo3_db, manifest, ReplayProvider({}), 3)
    assert report.queries == [] and "no repositories" in caplog.text
    write_outputs(report, tmp_path / "empty.json")
    assert json.loads((tmp_path / "empty.json").read_text()) == []


def test_generate_respects_targets(tmp_path):
    db = _two_repo_index(tmp_path / "src")
    capped = RepoManifest(MANIFEST.repos, {Level.MODULE: 1, Level.SIGNAL: 0})
    report = generate_benchmark(db, capped, CallableProvider(respond), 3)
    assert report.counts["MODULE"] == 1 and report.counts["SIGNAL"] == 0
    assert report.counts["BLOCK"] > 0


def test_load_manifest(tmp_path):
    (tmp_path / "core").mkdir()
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"repos": [
        {"label": "core", "root": "core", "category": "CPU"},
        {"label": "off", "root": "missing", "category": "CPU", "include": False}],
        "targets": {"BLOCK": 5}}))
    manifest = load_manifest(path)
    assert [r.label for r in manifest.included] == ["core"]
    assert manifest.targets == {Level.BLOCK: 5}
    path.write_text(json.dumps({"repos": [{"label": "a", "root": "gone", "category": "CPU"}]}))
    with pytest.raises(PreconditionError):
        load_manifest(path)
    with pytest.raises(PreconditionError):
        RepoManifest((RepoEntry("a", "a", Category.CPU), RepoEntry("a", "b", Category.CPU)))
