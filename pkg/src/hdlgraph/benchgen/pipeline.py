"""Benchmark generation: describe, annotate, abstract, scrub, refine.

Every provider call goes through a rendered prompt template, so a replay
transcript keyed by prompt hash fully determines the output. Progress is
appended to a JSONL checkpoint; a resumed run reuses finished steps and
produces the same file as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import os
import re
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from string import Template

from ..errors import EmptyGeneration, PreconditionError, ProviderError
from ..eval.benchmark import BenchmarkQuery, dumps_benchmark
from ..graph.model import EXTERNAL_FILE, GraphNode, NodeKind
from ..retrieval import Level
from ..scoring import split_identifier
from ..store import GraphDatabase
from .providers import TextGenProvider

logger = logging.getLogger(__name__)

DEFAULT_ROUNDS = 7
MODULE_PLACEHOLDER = "the module"
SIGNAL_PLACEHOLDER = "the signal"


# -- templates ----------------------------------------------------------------


def load_template(name: str) -> Template:
    text = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text("utf-8")
    return Template(text)


def render(name: str, **fields: str) -> str:
    return load_template(name).substitute(**fields)


def _generate(provider: TextGenProvider, prompt: str, what: str) -> str:
    text = provider.generate(prompt).strip()
    if not text:
        raise EmptyGeneration(f"empty generation for {what}")
    return text


# -- manifest -----------------------------------------------------------------


class Category(str, Enum):
    FPGA_PROJECT = "FPGA_PROJECT"
    INTERCONNECTION = "INTERCONNECTION"
    CPU = "CPU"


@dataclass(frozen=True)
class RepoEntry:
    label: str
    root: str
    category: Category
    include: bool = True

    @property
    def prefix(self) -> str:
        """File-path prefix of this repository's nodes ('' for the index root)."""
        root = self.root.strip("/")
        return "" if root in ("", ".") else root + "/"

    def owns(self, file_path: str) -> bool:
        return file_path != EXTERNAL_FILE and file_path.startswith(self.prefix)


@dataclass(frozen=True)
class RepoManifest:
    repos: tuple[RepoEntry, ...]
    targets: dict[Level, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        labels = [r.label for r in self.repos]
        if len(set(labels)) != len(labels):
            raise PreconditionError("repository labels must be unique")
        for level, count in self.targets.items():
            if count < 0:
                raise PreconditionError(f"target for {level.value} must be >= 0")

    @property
    def included(self) -> list[RepoEntry]:
        return [r for r in self.repos if r.include]


def load_manifest(path: str | os.PathLike[str], *, index_root: str | None = None,
                  check_disk: bool = True) -> RepoManifest:
    """Read a manifest; repository roots resolve against ``index_root``.

    ``index_root`` defaults to the manifest's own ``index_root`` key, taken
    relative to the manifest's directory.
    """
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = Path(index_root) if index_root is not None \
        else path.parent / data.get("index_root", ".")
    repos = tuple(
        RepoEntry(r["label"], r["root"], Category(r["category"]), bool(r.get("include", True)))
        for r in data.get("repos", [])
    )
    targets = {Level(k): int(v) for k, v in data.get("targets", {}).items()}
    manifest = RepoManifest(repos, targets)
    if check_disk:
        for r in manifest.included:
            if not (base / r.root).is_dir():
                raise PreconditionError(f"repository {r.label!r}: {base / r.root} is missing")
    return manifest


# -- generation steps ---------------------------------------------------------------


def describe_block(provider: TextGenProvider, block: GraphNode) -> str:
    if block.kind is not NodeKind.BLOCK or not block.code:
        raise PreconditionError(f"{block.id} is not a BLOCK with code")
    try:
        return _generate(provider, render("describe_block", code=block.code), block.id)
    except ProviderError as exc:
        raise ProviderError(f"{block.id}: {exc}") from exc


ROLE_PHRASES = {
    "driven": "The signal produced by logic that works as follows:",
    "read": "The signal consumed by logic that works as follows:",
    "both": "The signal both produced and consumed by logic that works as follows:",
}


def signal_role(block: GraphNode, name: str) -> str:
    drives = set(filter(None, block.attributes.get("drives", "").split(",")))
    reads = set(filter(None, block.attributes.get("reads", "").split(",")))
    if name in drives and name in reads:
        return "both"
    return "driven" if name in drives else "read"


def annotate_signals(db: GraphDatabase, block: GraphNode, block_description: str
                     ) -> list[tuple[str, str]]:
    """One description per signal the block contains, phrased by its role."""
    out = []
    for sid in db.neighbors(block.id, "CONTAINS"):
        node = db.node(sid)
        if node.kind is NodeKind.SIGNAL and node.attributes.get("placeholder") != "instance_port":
            role = signal_role(block, node.name)
            out.append((sid, f"{ROLE_PHRASES[role]} {block_description}"))
    return out


def abstract_module(provider: TextGenProvider, module: GraphNode,
                    block_descriptions: Sequence[str]) -> str:
    if module.kind is not NodeKind.MODULE:
        raise PreconditionError(f"{module.id} is not a MODULE")
    if not block_descriptions:
        raise PreconditionError(f"{module.id}: no block descriptions to abstract")
    listing = "\n".join(f"{i}. {d}" for i, d in enumerate(block_descriptions, 1))
    try:
        return _generate(provider, render("abstract_module", descriptions=listing), module.id)
    except ProviderError as exc:
        raise ProviderError(f"{module.id}: {exc}") from exc


# -- name scrubbing -------------------------------------------------------------

_ARTICLE = r"(?:(?:the|a|an)\s+)?"
_MODULE_NOUN = r"(?:\s+(?:module|block|unit|instance))?"
_SIGNAL_NOUN = r"(?:\s+(?:signal|signals|port|register|wire|net|bus|flag|input|output))?"
_SEP = r"[^A-Za-z0-9]*"


def name_parts(name: str) -> list[str]:
    return split_identifier(name) or [name.lower()]


def _name_regex(name: str) -> str:
    return _SEP.join(re.escape(p) for p in name_parts(name))


class Scrubber:
    """Replace repository identifiers with level placeholders.

    A name matches case-insensitively with any non-alphanumeric run (or
    nothing) between its sub-tokens, so ``wr_en`` also catches "wr en",
    "WrEn" and "wren". A leading article and a trailing level noun
    ("module", "signal", "port", ...) are absorbed into the placeholder.
    Existing placeholders are matched first and left alone, which keeps the
    operation idempotent.
    """

    def __init__(self, module_names: Iterable[str], signal_names: Iterable[str]) -> None:
        modules = sorted(set(module_names), key=lambda n: (-len("".join(name_parts(n))), n))
        signals = sorted(set(signal_names) - set(modules),
                         key=lambda n: (-len("".join(name_parts(n))), n))
        self.names = modules + signals
        alternatives = [f"(?P<keep>{re.escape(MODULE_PLACEHOLDER)}|"
                        f"{re.escape(SIGNAL_PLACEHOLDER)})"]
        if modules:
            alternatives.append(
                f"(?P<module>{_ARTICLE}(?:{'|'.join(_name_regex(n) for n in modules)})"
                f"{_MODULE_NOUN})")
        if signals:
            alternatives.append(
                f"(?P<signal>{_ARTICLE}(?:{'|'.join(_name_regex(n) for n in signals)})"
                f"{_SIGNAL_NOUN})")
        self._re = re.compile(r"(?<![A-Za-z0-9])(?:" + "|".join(alternatives) +
                              r")(?![A-Za-z0-9])", re.IGNORECASE)

    def __call__(self, text: str) -> str:
        def repl(m: re.Match[str]) -> str:
            if m.group("keep"):
                return m.group(0)
            return MODULE_PLACEHOLDER if m.lastgroup == "module" else SIGNAL_PLACEHOLDER

        return " ".join(self._re.sub(repl, text).split())


def repo_names(db: GraphDatabase, repo: RepoEntry | str) -> tuple[list[str], list[str]]:
    """(module names, signal names) declared in one repository."""
    prefix = repo.prefix if isinstance(repo, RepoEntry) else repo

    def owned(node: GraphNode) -> bool:
        f = node.attributes.get("file", "")
        return f != EXTERNAL_FILE and f.startswith(prefix)

    modules = sorted({n.name for n in db.find(NodeKind.MODULE) if owned(n)})
    signals = sorted({n.name for n in db.find(NodeKind.SIGNAL)
                      if owned(n) and "." not in n.name})
    return modules, signals


def scrub_names(db: GraphDatabase, repo: RepoEntry | str, text: str) -> str:
    return Scrubber(*repo_names(db, repo))(text)


def leaked_identifiers(text: str, names: Iterable[str]) -> list[str]:
    """Names still present in ``text`` as a word or a run of their sub-tokens."""
    words = [w.lower() for w in re.findall(r"[A-Za-z0-9]+", text)]
    leaks = []
    for name in names:
        parts = name_parts(name)
        joined = "".join(parts)
        n = len(parts)
        if joined in words or any(words[i : i + n] == parts
                                  for i in range(len(words) - n + 1)):
            leaks.append(name)
    return sorted(leaks)


# -- refinement -----------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedQuery:
    target_id: str
    level: Level
    description: str
    scrubbed_query: str
    rounds_used: int = 0
    repo: str = ""
    source_block: str | None = None  # seeding block for signal-level queries

    def to_dict(self) -> dict:
        return {"target_id": self.target_id, "level": self.level.value,
                "description": self.description, "scrubbed_query": self.scrubbed_query,
                "rounds_used": self.rounds_used, "repo": self.repo,
                "source_block": self.source_block}

    @classmethod
    def from_dict(cls, d: dict) -> GeneratedQuery:
        return cls(d["target_id"], Level(d["level"]), d["description"], d["scrubbed_query"],
                   d["rounds_used"], d.get("repo", ""), d.get("source_block"))


@dataclass(frozen=True)
class Rejection:
    target_id: str
    level: Level
    rounds_used: int
    last_feedback: str

    def to_dict(self) -> dict:
        return {"target_id": self.target_id, "level": self.level.value,
                "rounds_used": self.rounds_used, "last_feedback": self.last_feedback}

    @classmethod
    def from_dict(cls, d: dict) -> Rejection:
        return cls(d["target_id"], Level(d["level"]), d["rounds_used"], d["last_feedback"])


def parse_verdict(text: str) -> tuple[str, str]:
    """("PASS" | "FAIL" | "REJECT", feedback)."""
    stripped = text.strip()
    head = stripped.split(None, 1)[0].rstrip(":").upper() if stripped else ""
    if head in ("PASS", "REJECT"):
        verdict = head
    else:
        verdict = "FAIL"
    feedback = re.sub(r"^(?:PASS|FAIL|REJECT)\s*:?\s*", "", stripped, flags=re.IGNORECASE)
    return verdict, feedback


def refine(provider: TextGenProvider, candidate: GeneratedQuery, K: int = DEFAULT_ROUNDS, *,
           code: str = "", scrub: Callable[[str], str] = lambda s: s
           ) -> GeneratedQuery | Rejection:
    """Judge, and on fixable failure rewrite, for at most ``K`` rounds."""
    if K < 1:
        raise PreconditionError("K must be >= 1")
    query = candidate.scrubbed_query
    feedback = ""
    for round_no in range(1, K + 1):
        verdict, feedback = parse_verdict(provider.generate(render(
            "judge", level=candidate.level.value, query=query, code=code)))
        if verdict == "PASS":
            return GeneratedQuery(candidate.target_id, candidate.level, candidate.description,
                                  query, round_no, candidate.repo, candidate.source_block)
        if verdict == "REJECT":
            logger.info("rejected %s at round %d: %s", candidate.target_id, round_no, feedback)
            return Rejection(candidate.target_id, candidate.level, round_no, feedback)
        if round_no < K:
            rewritten = scrub(provider.generate(render(
                "regenerate", level=candidate.level.value, query=query, feedback=feedback,
                code=code)).strip())
            if rewritten:
                query = rewritten
    logger.info("rejected %s after %d rounds: %s", candidate.target_id, K, feedback)
    return Rejection(candidate.target_id, candidate.level, K, feedback)


# -- end to end ---------------------------------------------------------------------


class Checkpoint:
    """Append-only JSONL record of finished steps, keyed by step name."""

    def __init__(self, path: str | os.PathLike[str] | None) -> None:
        self.path = Path(path) if path is not None else None
        self.done: dict[str, object] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    logger.warning("ignoring torn checkpoint line in %s", self.path)
                    continue
                self.done[rec["key"]] = rec["value"]

    def get(self, key: str) -> object | None:
        return self.done.get(key)

    def put(self, key: str, value: object) -> None:
        self.done[key] = value
        if self.path is None:
            return
        line = json.dumps({"key": key, "value": value}, sort_keys=True) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())


@dataclass
class GenerationReport:
    queries: list[BenchmarkQuery]
    accepted: list[GeneratedQuery]
    rejections: list[Rejection]

    @property
    def counts(self) -> dict[str, int]:
        out = {level.value: 0 for level in Level}
        for q in self.queries:
            out[q.level.value] += 1
        return out


def _cached(checkpoint: Checkpoint, key: str, compute: Callable[[], str]) -> str:
    hit = checkpoint.get(key)
    if isinstance(hit, str):
        return hit
    value = compute()
    checkpoint.put(key, value)
    return value


def _candidates(db: GraphDatabase, repo: RepoEntry, provider: TextGenProvider,
                checkpoint: Checkpoint) -> list[tuple[GeneratedQuery, str]]:
    """(unscrubbed candidate, reference code) in module, then source, order."""
    out: list[tuple[GeneratedQuery, str]] = []
    modules = [m for m in db.find(NodeKind.MODULE) if repo.owns(m.attributes.get("file", ""))]
    for module in modules:
        described: list[tuple[GraphNode, str]] = []
        for block in db.blocks_of(module.id):
            desc = _cached(checkpoint, f"describe:{block.id}",
                           lambda b=block: describe_block(provider, b))
            described.append((block, desc))
        if not described:
            continue
        summary = _cached(checkpoint, f"module:{module.id}",
                          lambda m=module: abstract_module(provider, m,
                                                           [d for _, d in described]))
        out.append((GeneratedQuery(module.id, Level.MODULE, summary, summary, repo=repo.label),
                    module.code))
        seen_signals: set[str] = set()
        for block, desc in described:
            out.append((GeneratedQuery(block.id, Level.BLOCK, desc, desc, repo=repo.label),
                        block.code))
            for sid, sdesc in annotate_signals(db, block, desc):
                if sid in seen_signals:
                    continue
                seen_signals.add(sid)
                out.append((GeneratedQuery(sid, Level.SIGNAL, sdesc, sdesc, repo=repo.label,
                                           source_block=block.id), block.code))
    return out


def generate_benchmark(db: GraphDatabase, manifest: RepoManifest, provider: TextGenProvider,
                       K: int = DEFAULT_ROUNDS, *, checkpoint: str | os.PathLike[str] | None = None
                       ) -> GenerationReport:
    """Run every included repository through the full flow."""
    if not manifest.included:
        logger.warning("manifest includes no repositories; benchmark is empty")
    ckpt = Checkpoint(checkpoint)
    accepted: list[GeneratedQuery] = []
    rejections: list[Rejection] = []
    taken = {level: 0 for level in Level}
    for repo in sorted(manifest.included, key=lambda r: r.label):
        scrub = Scrubber(*repo_names(db, repo))
        for cand, code in _candidates(db, repo, provider, ckpt):
            limit = manifest.targets.get(cand.level)
            if limit is not None and taken[cand.level] >= limit:
                continue
            key = f"refine:{cand.level.value}:{cand.target_id}"
            rec = ckpt.get(key)
            if rec is None:
                scrubbed = scrub(cand.description)
                if not scrubbed:
                    result: GeneratedQuery | Rejection = Rejection(
                        cand.target_id, cand.level, 0, "nothing left after scrubbing")
                else:
                    result = refine(provider, GeneratedQuery(
                        cand.target_id, cand.level, cand.description, scrubbed, 0, cand.repo,
                        cand.source_block), K, code=code, scrub=scrub)
                rec = {"accepted": isinstance(result, GeneratedQuery), **result.to_dict()}
                ckpt.put(key, rec)
            assert isinstance(rec, dict)
            if rec["accepted"]:
                accepted.append(GeneratedQuery.from_dict(rec))
                taken[cand.level] += 1
            else:
                rejections.append(Rejection.from_dict(rec))
    queries = [BenchmarkQuery(f"{q.repo}/{q.target_id}", q.level, q.scrubbed_query,
                              frozenset({q.target_id}), q.repo) for q in accepted]
    report = GenerationReport(queries, accepted, rejections)
    logger.info("accepted %s, rejected %d", report.counts, len(rejections))
    return report


def review_text(report: GenerationReport) -> str:
    """Markdown list of accepted queries for human sign-off."""
    lines = ["# Benchmark review", ""]
    for q in sorted(report.accepted, key=lambda q: (q.repo, q.target_id)):
        lines.append(f"- [ ] `{q.target_id}` ({q.level.value}, {q.rounds_used} round(s)): "
                     f"{q.scrubbed_query}")
    if report.rejections:
        lines += ["", "## Rejected", ""]
        for r in sorted(report.rejections, key=lambda r: r.target_id):
            lines.append(f"- `{r.target_id}` ({r.level.value}): {r.last_feedback}")
    return "\n".join(lines) + "\n"


def write_outputs(report: GenerationReport, out: str | os.PathLike[str]) -> Path:
    """Benchmark file at ``out`` plus ``<out>.review.md``; returns the review path."""
    out = Path(out)
    out.write_text(dumps_benchmark(report.queries), encoding="utf-8", newline="\n")
    review = out.with_name(out.name + ".review.md")
    review.write_text(review_text(report), encoding="utf-8", newline="\n")
    return review
