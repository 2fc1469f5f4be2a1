"""Immutable AST for the supported Verilog subset.

Three abstraction levels are exposed: :class:`AstModule` owns
:class:`AstBlock` (always / assign / initial / instance) and
:class:`AstSignal` declarations. Expressions and statements are small frozen
dataclasses so that two parses of the same bytes compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union


class BlockKind(str, Enum):
    ALWAYS = "ALWAYS"
    ASSIGN = "ASSIGN"
    INITIAL = "INITIAL"
    INSTANCE = "INSTANCE"


class Direction(str, Enum):
    INPUT = "INPUT"
    OUTPUT = "OUTPUT"
    INOUT = "INOUT"
    INTERNAL = "INTERNAL"


class NetKind(str, Enum):
    WIRE = "WIRE"
    REG = "REG"
    PARAMETER = "PARAMETER"


@dataclass(frozen=True)
class SourceSpan:
    file_path: str
    byte_start: int
    byte_end: int
    line_start: int
    line_end: int

    def __post_init__(self) -> None:
        if not (0 <= self.byte_start <= self.byte_end):
            raise ValueError(f"bad byte range {self.byte_start}..{self.byte_end}")
        if self.line_start > self.line_end:
            raise ValueError(f"bad line range {self.line_start}..{self.line_end}")

    def slice(self, data: bytes) -> bytes:
        return data[self.byte_start : self.byte_end]

    def contains(self, other: SourceSpan) -> bool:
        return self.byte_start <= other.byte_start and other.byte_end <= self.byte_end

    def to_dict(self) -> dict:
        return {
            "file_path": self.file_path,
            "byte_start": self.byte_start,
            "byte_end": self.byte_end,
            "line_start": self.line_start,
            "line_end": self.line_end,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SourceSpan:
        return cls(
            d["file_path"], d["byte_start"], d["byte_end"], d["line_start"], d["line_end"]
        )


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Identifier:
    name: str


@dataclass(frozen=True)
class Number:
    text: str


@dataclass(frozen=True)
class StringLiteral:
    text: str


@dataclass(frozen=True)
class MacroRef:
    """Unexpanded `` `NAME `` usage; treated as an opaque constant."""

    name: str


@dataclass(frozen=True)
class Select:
    """``target[index]`` (``lsb is None``) or ``target[msb op lsb]``."""

    target: "Expr"
    msb: "Expr"
    lsb: "Expr | None" = None
    op: str = ":"


@dataclass(frozen=True)
class Concat:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Repeat:
    count: "Expr"
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ternary:
    cond: "Expr"
    if_true: "Expr"
    if_false: "Expr"


@dataclass(frozen=True)
class Call:
    """System (``$clog2``) or user function call."""

    name: str
    args: tuple["Expr", ...]


Expr = Union[
    Identifier, Number, StringLiteral, MacroRef, Select, Concat, Repeat, Unary, Binary,
    Ternary, Call,
]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Assignment:
    target: Expr
    value: Expr
    blocking: bool = True


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Statement"
    otherwise: "Statement | None" = None


@dataclass(frozen=True)
class CaseItem:
    labels: tuple[Expr, ...]  # empty for ``default``
    body: "Statement"

    @property
    def is_default(self) -> bool:
        return not self.labels


@dataclass(frozen=True)
class Case:
    kind: str  # case / casez / casex
    subject: Expr
    items: tuple[CaseItem, ...]


@dataclass(frozen=True)
class SeqBlock:
    label: str | None
    body: tuple["Statement", ...]


@dataclass(frozen=True)
class SystemTask:
    name: str
    args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class NullStatement:
    pass


Statement = Union[Assignment, If, Case, SeqBlock, SystemTask, NullStatement]


@dataclass(frozen=True)
class SensitivityItem:
    edge: str | None  # "posedge" / "negedge" / None
    expr: Expr


# -- entities ----------------------------------------------------------------


@dataclass(frozen=True)
class AstSignal:
    name: str
    direction: Direction
    net_kind: NetKind
    span: SourceSpan
    width: tuple[int, int] | None = None
    raw_width: str | None = None
    signed: bool = False


@dataclass(frozen=True)
class AstBlock:
    kind: BlockKind
    span: SourceSpan
    statements: tuple[Statement, ...] = ()
    referenced_signals: frozenset[str] = frozenset()
    label: str | None = None
    sensitivity: tuple[SensitivityItem, ...] = ()
    sensitivity_star: bool = False
    instance_of: str | None = None
    instance_name: str | None = None
    port_connections: tuple[tuple[str, Expr | None], ...] | None = None
    parameter_overrides: tuple[tuple[str, Expr], ...] = ()
    code: str = ""

    def __post_init__(self) -> None:
        if (self.kind is BlockKind.INSTANCE) != (self.instance_of is not None):
            raise ValueError("instance_of is required exactly for INSTANCE blocks")


@dataclass(frozen=True)
class AstModule:
    name: str
    span: SourceSpan
    ports: tuple[str, ...] = ()
    signals: tuple[AstSignal, ...] = ()
    blocks: tuple[AstBlock, ...] = ()
    code: str = ""

    def signal(self, name: str) -> AstSignal | None:
        for s in self.signals:
            if s.name == name:
                return s
        return None

    @property
    def port_signals(self) -> tuple[AstSignal, ...]:
        by_name = {s.name: s for s in self.signals}
        return tuple(by_name[p] for p in self.ports)


# -- walkers -----------------------------------------------------------------


def iter_expr(expr: Expr | None) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    if expr is None:
        return
    stack: list[Expr] = [expr]
    while stack:
        e = stack.pop()
        yield e
        if isinstance(e, Select):
            children = [e.target, e.msb] + ([e.lsb] if e.lsb is not None else [])
        elif isinstance(e, (Concat,)):
            children = list(e.items)
        elif isinstance(e, Repeat):
            children = [e.count, *e.items]
        elif isinstance(e, Unary):
            children = [e.operand]
        elif isinstance(e, Binary):
            children = [e.left, e.right]
        elif isinstance(e, Ternary):
            children = [e.cond, e.if_true, e.if_false]
        elif isinstance(e, Call):
            children = list(e.args)
        else:
            children = []
        stack.extend(reversed(children))


def expr_identifiers(expr: Expr | None) -> list[str]:
    """Identifier names in source order (duplicates kept)."""
    return [e.name for e in iter_expr(expr) if isinstance(e, Identifier)]


def iter_statements(stmt: Statement | None) -> Iterator[Statement]:
    if stmt is None:
        return
    yield stmt
    if isinstance(stmt, SeqBlock):
        for s in stmt.body:
            yield from iter_statements(s)
    elif isinstance(stmt, If):
        yield from iter_statements(stmt.then)
        yield from iter_statements(stmt.otherwise)
    elif isinstance(stmt, Case):
        for item in stmt.items:
            yield from iter_statements(item.body)


def statement_exprs(stmt: Statement) -> list[Expr]:
    """Expressions owned directly by ``stmt`` (not by nested statements)."""
    if isinstance(stmt, Assignment):
        return [stmt.target, stmt.value]
    if isinstance(stmt, If):
        return [stmt.cond]
    if isinstance(stmt, Case):
        out = [stmt.subject]
        for item in stmt.items:
            out.extend(item.labels)
        return out
    if isinstance(stmt, SystemTask):
        return list(stmt.args)
    return []


def block_identifiers(block: AstBlock) -> frozenset[str]:
    """Re-derive the identifiers syntactically present in a block body."""
    names: set[str] = set()
    for item in block.sensitivity:
        names.update(expr_identifiers(item.expr))
    for top in block.statements:
        for stmt in iter_statements(top):
            for e in statement_exprs(stmt):
                names.update(expr_identifiers(e))
    for _, e in block.port_connections or ():
        names.update(expr_identifiers(e))
    for _, e in block.parameter_overrides:
        names.update(expr_identifiers(e))
    return frozenset(names)


def lvalue_targets(expr: Expr) -> list[str]:
    """Base signal names written by an assignment target."""
    if isinstance(expr, Identifier):
        return [expr.name]
    if isinstance(expr, Select):
        return lvalue_targets(expr.target)
    if isinstance(expr, Concat):
        out: list[str] = []
        for item in expr.items:
            out.extend(lvalue_targets(item))
        return out
    return []


def lvalue_index_identifiers(expr: Expr) -> list[str]:
    """Identifiers read while computing an lvalue (select indices)."""
    if isinstance(expr, Select):
        out = lvalue_index_identifiers(expr.target)
        out.extend(expr_identifiers(expr.msb))
        out.extend(expr_identifiers(expr.lsb))
        return out
    if isinstance(expr, Concat):
        out = []
        for item in expr.items:
            out.extend(lvalue_index_identifiers(item))
        return out
    return []
