"""Benchmark interchange format: a JSON array of query records."""

from __future__ import annotations

import json
import os
from collections.abc import Iterable
from dataclasses import dataclass

from ..errors import FormatError, PreconditionError
from ..retrieval import Level

_LEVEL_PREFIX = {Level.MODULE: "MODULE:", Level.BLOCK: "BLOCK:", Level.SIGNAL: "SIGNAL:"}


@dataclass(frozen=True)
class BenchmarkQuery:
    id: str
    level: Level
    text: str
    relevant_ids: frozenset[str]
    repo: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "relevant_ids", frozenset(self.relevant_ids))
        if not self.relevant_ids:
            raise PreconditionError(f"query {self.id!r} has no relevant ids")
        prefix = _LEVEL_PREFIX[self.level]
        bad = sorted(r for r in self.relevant_ids if not r.startswith(prefix))
        if bad:
            raise PreconditionError(f"query {self.id!r} is {self.level.value}-level but "
                                    f"lists {bad[0]}")

    def to_dict(self) -> dict:
        return {"id": self.id, "level": self.level.value, "text": self.text,
                "relevant_ids": sorted(self.relevant_ids), "repo": self.repo}

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkQuery:
        return cls(d["id"], Level(d["level"]), d["text"], frozenset(d["relevant_ids"]),
                   d.get("repo", ""))


def dumps_benchmark(queries: Iterable[BenchmarkQuery]) -> str:
    records = [q.to_dict() for q in sorted(queries, key=lambda q: q.id)]
    return json.dumps(records, indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def save_benchmark(queries: Iterable[BenchmarkQuery], path: str | os.PathLike[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_benchmark(queries))


def loads_benchmark(text: str) -> list[BenchmarkQuery]:
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"benchmark is not JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(records, list):
        raise FormatError("benchmark must be a JSON array", 1)
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(BenchmarkQuery.from_dict(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"record {i}: {exc}", 1) from None
    return out


def load_benchmark(path: str | os.PathLike[str]) -> list[BenchmarkQuery]:
    with open(path, encoding="utf-8") as fh:
        return loads_benchmark(fh.read())
