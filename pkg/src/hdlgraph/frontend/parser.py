"""Recursive-descent parser producing :mod:`hdlgraph.frontend.ast` trees."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from ..diagnostics import Diagnostic
from ..errors import UnterminatedModule, VerilogSyntaxError
from .ast import (
    AstBlock,
    AstModule,
    AstSignal,
    Assignment,
    Binary,
    BlockKind,
    Call,
    Case,
    CaseItem,
    Concat,
    Direction,
    Expr,
    Identifier,
    If,
    MacroRef,
    NetKind,
    NullStatement,
    Number,
    Repeat,
    Select,
    SensitivityItem,
    SeqBlock,
    SourceSpan,
    Statement,
    StringLiteral,
    SystemTask,
    Ternary,
    Unary,
    block_identifiers,
)
from .lexer import GATE_PRIMITIVES, SYSTEMVERILOG_WORDS, UNSUPPORTED, Token, tokenize

logger = logging.getLogger(__name__)

# Binary operator precedence, weakest first.
_BINARY_LEVELS: tuple[tuple[str, ...], ...] = (
    ("||",),
    ("&&",),
    ("|",),
    ("^", "~^", "^~"),
    ("&",),
    ("==", "!=", "===", "!=="),
    ("<", "<=", ">", ">="),
    ("<<", ">>", "<<<", ">>>"),
    ("+", "-"),
    ("*", "/", "%"),
    ("**",),
)
_UNARY_OPS = frozenset({"!", "~", "-", "+", "&", "|", "^", "~&", "~|", "~^", "^~"})
_NET_WORDS = {
    "wire": NetKind.WIRE, "tri": NetKind.WIRE, "wand": NetKind.WIRE, "wor": NetKind.WIRE,
    "supply0": NetKind.WIRE, "supply1": NetKind.WIRE, "reg": NetKind.REG,
    "integer": NetKind.REG,
}
_DIRECTION_WORDS = {"input": Direction.INPUT, "output": Direction.OUTPUT,
                    "inout": Direction.INOUT}


@dataclass
class ParseResult:
    modules: list[AstModule]
    diagnostics: list[Diagnostic] = field(default_factory=list)


class _ByteMap:
    """Character offset → UTF-8 byte offset."""

    def __init__(self, text: str) -> None:
        if text.isascii():
            self._table = None
        else:
            table = [0]
            total = 0
            for ch in text:
                total += len(ch.encode("utf-8"))
                table.append(total)
            self._table = table

    def __call__(self, offset: int) -> int:
        return offset if self._table is None else self._table[offset]


@dataclass
class _SignalDraft:
    name: str
    direction: Direction
    net_kind: NetKind
    span: SourceSpan
    width: tuple[int, int] | None
    raw_width: str | None
    signed: bool
    explicit_kind: bool

    def freeze(self) -> AstSignal:
        return AstSignal(self.name, self.direction, self.net_kind, self.span,
                         self.width, self.raw_width, self.signed)


class Parser:
    def __init__(self, text: str, path: str) -> None:
        self.text = text
        self.data = text.encode("utf-8")
        self.path = path
        tokens, self.diagnostics = tokenize(text, path)
        self.tokens: list[Token] = tokens
        self.i = 0
        self._bytes = _ByteMap(text)

    # -- token helpers -------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, n: int = 1) -> Token:
        return self.tokens[min(self.i + n, len(self.tokens) - 1)]

    def at(self, *values: str) -> bool:
        t = self.tok
        return t.kind in ("OP", "KEYWORD") and t.value in values

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def error(self, message: str, expected: tuple[str, ...] = (), tok: Token | None = None,
              cls: type[VerilogSyntaxError] = VerilogSyntaxError) -> VerilogSyntaxError:
        t = tok or self.tok
        return cls(message, path=self.path, line=t.line, column=t.col, expected=expected)

    def expect(self, *values: str) -> Token:
        if self.at(*values):
            return self.next()
        found = "end of file" if self.tok.kind == "EOF" else repr(self.tok.value)
        raise self.error(f"unexpected {found}", expected=values)

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind == "IDENT":
            return self.next()
        found = "end of file" if self.tok.kind == "EOF" else repr(self.tok.value)
        raise self.error(f"unexpected {found}, wanted {what}", expected=(what,))

    def span(self, first: Token, last: Token) -> SourceSpan:
        return SourceSpan(self.path, self._bytes(first.start), self._bytes(last.end),
                          first.line, self._end_line(last))

    def _end_line(self, tok: Token) -> int:
        return tok.line + self.text.count("\n", tok.start, tok.end)

    def source(self, first: Token, last: Token) -> str:
        return self.text[first.start : last.end]

    # -- top level -----------------------------------------------------------

    def parse(self) -> ParseResult:
        modules: list[AstModule] = []
        while self.tok.kind != "EOF":
            if self.at("module", "macromodule"):
                modules.append(self.parse_module())
            elif self.at(";"):
                self.next()
            else:
                raise self.error(f"unexpected {self.tok.value!r} outside module",
                                 expected=("module",))
        return ParseResult(modules, self.diagnostics)

    def parse_module(self) -> AstModule:
        first = self.expect("module", "macromodule")
        name = self.expect_ident("module name").value
        ctx = _ModuleContext(name)
        if self.at("#"):
            self.next()
            self.expect("(")
            self._header_parameters(ctx)
        if self.at("("):
            self.next()
            self._port_list(ctx)
        self.expect(";")
        while not self.at("endmodule"):
            if self.tok.kind == "EOF":
                raise self.error(f"module {name!r} is missing endmodule",
                                 expected=("endmodule",), cls=UnterminatedModule)
            self._module_item(ctx)
        last = self.next()
        for port in ctx.ports:
            draft = ctx.signals[port]
            if draft.direction is Direction.INTERNAL:
                self.diagnostics.append(Diagnostic(
                    self.path, draft.span.line_start, "PORT_NO_DIRECTION",
                    f"port {port!r} of {name!r} has no direction; assuming inout"))
                draft.direction = Direction.INOUT
        return AstModule(
            name=name,
            span=self.span(first, last),
            ports=tuple(ctx.ports),
            signals=tuple(d.freeze() for d in ctx.signals.values()),
            blocks=tuple(ctx.blocks),
            code=self.source(first, last),
        )

    # -- header --------------------------------------------------------------

    def _header_parameters(self, ctx: _ModuleContext) -> None:
        if self.at(")"):
            self.next()
            return
        while True:
            if self.at("parameter", "localparam"):
                self.next()
            self._parameter_assignments(ctx, terminators=(",", ")"))
            if self.at(")"):
                self.next()
                return
            self.expect(",")  # precedes another parameter clause

    def _port_list(self, ctx: _ModuleContext) -> None:
        if self.at(")"):
            self.next()
            return
        if self.at("input", "output", "inout"):
            self._ansi_ports(ctx)
            return
        while True:
            tok = self.expect_ident("port name")
            ctx.ports.append(tok.value)
            ctx.declare(_SignalDraft(tok.value, Direction.INTERNAL, NetKind.WIRE,
                                     self.span(tok, tok), None, None, False, False), self)
            if self.at(")"):
                self.next()
                return
            self.expect(",")

    def _ansi_ports(self, ctx: _ModuleContext) -> None:
        direction = Direction.INPUT
        net_kind, explicit = NetKind.WIRE, False
        signed, width, raw = False, None, None
        while True:
            if self.at("input", "output", "inout"):
                direction = _DIRECTION_WORDS[self.next().value]
                net_kind, explicit = NetKind.WIRE, False
                if self.tok.value in _NET_WORDS and self.tok.kind == "KEYWORD":
                    net_kind, explicit = _NET_WORDS[self.next().value], True
                signed = self._optional_signed()
                width, raw = self._optional_range()
            tok = self.expect_ident("port name")
            ctx.ports.append(tok.value)
            ctx.declare(_SignalDraft(tok.value, direction, net_kind, self.span(tok, tok),
                                     width, raw, signed, explicit), self)
            if self.at(")"):
                self.next()
                return
            self.expect(",")

    def _optional_signed(self) -> bool:
        if self.at("signed"):
            self.next()
            return True
        return False

    def _optional_range(self) -> tuple[tuple[int, int] | None, str | None]:
        if not self.at("["):
            return None, None
        open_tok = self.next()
        msb = self.expression()
        self.expect(":")
        lsb = self.expression()
        close = self.expect("]")
        if isinstance(msb, Number) and isinstance(lsb, Number):
            m, l = _plain_int(msb.text), _plain_int(lsb.text)
            if m is not None and l is not None:
                return (m, l), None
        return None, self.source(open_tok, close)

    def _skip_unpacked_dims(self) -> None:
        while self.at("["):
            self.next()
            self.expression()
            self.expect(":")
            self.expression()
            self.expect("]")

    # -- module items --------------------------------------------------------

    def _module_item(self, ctx: _ModuleContext) -> None:
        tok = self.tok
        if tok.kind == "KEYWORD":
            word = tok.value
            if word in _DIRECTION_WORDS:
                return self._port_declaration(ctx)
            if word in _NET_WORDS:
                return self._net_declaration(ctx)
            if word in ("parameter", "localparam"):
                self.next()
                self._parameter_assignments(ctx, terminators=(";",))
                self.expect(";")
                return
            if word == "assign":
                return self._continuous_assign(ctx)
            if word == "always":
                return self._procedural(ctx, BlockKind.ALWAYS)
            if word == "initial":
                return self._procedural(ctx, BlockKind.INITIAL)
            if word in UNSUPPORTED:
                raise self.error(f"unsupported construct {word!r}")
            raise self.error(f"unexpected keyword {word!r} in module body",
                             expected=("declaration", "assign", "always", "initial",
                                       "instance", "endmodule"))
        if tok.kind == "IDENT":
            if tok.value in SYSTEMVERILOG_WORDS:
                raise self.error(f"SystemVerilog construct {tok.value!r} is not supported")
            if tok.value in GATE_PRIMITIVES:
                raise self.error(f"gate primitive {tok.value!r} is not supported")
            return self._instantiation(ctx)
        if self.at(";"):
            self.next()
            return
        raise self.error(f"unexpected {tok.value!r} in module body",
                         expected=("declaration", "assign", "always", "initial",
                                   "instance", "endmodule"))

    def _port_declaration(self, ctx: _ModuleContext) -> None:
        direction = _DIRECTION_WORDS[self.next().value]
        net_kind, explicit = NetKind.WIRE, False
        if self.tok.kind == "KEYWORD" and self.tok.value in _NET_WORDS:
            net_kind, explicit = _NET_WORDS[self.next().value], True
        signed = self._optional_signed()
        width, raw = self._optional_range()
        while True:
            tok = self.expect_ident("port name")
            ctx.declare(_SignalDraft(tok.value, direction, net_kind, self.span(tok, tok),
                                     width, raw, signed, explicit), self)
            if self.at(";"):
                self.next()
                return
            self.expect(",")

    def _net_declaration(self, ctx: _ModuleContext) -> None:
        first = self.next()
        net_kind = _NET_WORDS[first.value]
        signed = self._optional_signed()
        width, raw = self._optional_range()
        inits: list[Statement] = []
        while True:
            tok = self.expect_ident("net name")
            ctx.declare(_SignalDraft(tok.value, Direction.INTERNAL, net_kind,
                                     self.span(tok, tok), width, raw, signed, True), self)
            self._skip_unpacked_dims()
            if self.at("="):
                self.next()
                value = self.expression()
                if net_kind is NetKind.WIRE:
                    # net declaration assignment acts as a continuous assign
                    inits.append(Assignment(Identifier(tok.value), value, blocking=True))
            if self.at(";"):
                end = self.next()
                break
            self.expect(",")
        if inits:
            block = AstBlock(BlockKind.ASSIGN, self.span(first, end), tuple(inits))
            ctx.add_block(block, self)

    def _parameter_assignments(self, ctx: _ModuleContext, terminators: tuple[str, ...]) -> None:
        """Parse ``[signed] [range] name = expr {, name = expr}``.

        Stops (without consuming) at a terminator or at a comma that starts
        the next ``parameter`` clause of a header list.
        """
        self._optional_signed()
        if self.at("integer"):
            self.next()
        width, raw = self._optional_range()
        while True:
            tok = self.expect_ident("parameter name")
            self.expect("=")
            self.expression()
            ctx.declare(_SignalDraft(tok.value, Direction.INTERNAL, NetKind.PARAMETER,
                                     self.span(tok, tok), width, raw, False, True), self)
            if self.at(*terminators):
                if not self.at(",") or self.peek().value in ("parameter", "localparam"):
                    return
            self.expect(",")

    def _continuous_assign(self, ctx: _ModuleContext) -> None:
        first = self.next()
        if self.at("#"):
            self._delay()
        stmts = []
        while True:
            target = self.lvalue()
            self.expect("=")
            stmts.append(Assignment(target, self.expression(), blocking=True))
            if self.at(";"):
                last = self.next()
                break
            self.expect(",")
        block = AstBlock(BlockKind.ASSIGN, self.span(first, last), tuple(stmts))
        ctx.add_block(block, self)

    def _procedural(self, ctx: _ModuleContext, kind: BlockKind) -> None:
        first = self.next()
        sensitivity: tuple[SensitivityItem, ...] = ()
        star = False
        if kind is BlockKind.ALWAYS and self.at("@"):
            sensitivity, star = self._event_control()
        body = self.statement()
        last = self.tokens[self.i - 1]
        label = body.label if isinstance(body, SeqBlock) else None
        block = AstBlock(kind, self.span(first, last), (body,), label=label,
                         sensitivity=sensitivity, sensitivity_star=star)
        ctx.add_block(block, self)

    def _event_control(self) -> tuple[tuple[SensitivityItem, ...], bool]:
        self.expect("@")
        if self.at("*"):
            self.next()
            return (), True
        if self.tok.kind == "IDENT":
            return (SensitivityItem(None, Identifier(self.next().value)),), False
        self.expect("(")
        if self.at("*"):
            self.next()
            self.expect(")")
            return (), True
        items = []
        while True:
            edge = None
            if self.at("posedge", "negedge"):
                edge = self.next().value
            items.append(SensitivityItem(edge, self.expression()))
            if self.at(")"):
                self.next()
                return tuple(items), False
            self.expect("or", ",")

    def _delay(self) -> None:
        self.expect("#")
        if self.at("("):
            self.next()
            self.expression()
            self.expect(")")
        elif self.tok.kind in ("NUMBER", "IDENT", "MACRO"):
            self.next()
        else:
            raise self.error("malformed delay", expected=("number", "("))

    def _instantiation(self, ctx: _ModuleContext) -> None:
        type_tok = self.next()
        overrides: list[tuple[str, Expr]] = []
        if self.at("#"):
            self.next()
            if self.at("("):
                overrides = self._connections(named_prefix="#")
            else:
                raise self.error("malformed parameter override", expected=("(",))
        first = type_tok
        while True:
            inst_tok = self.expect_ident("instance name")
            self._skip_unpacked_dims()
            if not self.at("("):
                raise self.error(f"unexpected {self.tok.value!r} in instance",
                                 expected=("(",))
            conns = self._connections(named_prefix="")
            last = self.tokens[self.i - 1]
            if self.at(";"):
                last = self.next()
                done = True
            else:
                self.expect(",")
                done = False
            block = AstBlock(
                BlockKind.INSTANCE, self.span(first, last), (),
                instance_of=type_tok.value, instance_name=inst_tok.value,
                port_connections=tuple(conns), parameter_overrides=tuple(
                    (n, e) for n, e in overrides if e is not None),
            )
            ctx.add_block(block, self)
            if done:
                return
            first = self.tok

    def _connections(self, named_prefix: str) -> list[tuple[str, Expr | None]]:
        self.expect("(")
        out: list[tuple[str, Expr | None]] = []
        if self.at(")"):
            self.next()
            return out
        position = 0
        while True:
            if self.at("."):
                self.next()
                port = self.expect_ident("port name").value
                self.expect("(")
                expr = None if self.at(")") else self.expression()
                self.expect(")")
                out.append((port, expr))
            elif self.at(",", ")"):
                out.append((str(position), None))
            else:
                out.append((str(position), self.expression()))
            position += 1
            if self.at(")"):
                self.next()
                return out
            self.expect(",")

    # -- statements ----------------------------------------------------------

    def statement(self) -> Statement:
        tok = self.tok
        if self.at("begin"):
            self.next()
            label = None
            if self.at(":"):
                self.next()
                label = self.expect_ident("block label").value
            body = []
            while not self.at("end"):
                if self.tok.kind == "EOF":
                    raise self.error("missing 'end'", expected=("end",), cls=UnterminatedModule)
                body.append(self.statement())
            self.next()
            return SeqBlock(label, tuple(body))
        if self.at("if"):
            self.next()
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            then = self.statement()
            otherwise = None
            if self.at("else"):
                self.next()
                otherwise = self.statement()
            return If(cond, then, otherwise)
        if self.at("case", "casez", "casex"):
            return self._case()
        if self.at("#"):
            self._delay()
            if self.at(";"):
                self.next()
                return NullStatement()
            return self.statement()
        if self.at("@"):
            self._event_control()
            return self.statement()
        if self.at(";"):
            self.next()
            return NullStatement()
        if tok.kind == "SYSID":
            self.next()
            args: tuple[Expr, ...] = ()
            if self.at("("):
                args = self._call_args()
            self.expect(";")
            return SystemTask(tok.value, args)
        if tok.kind == "KEYWORD" and tok.value in UNSUPPORTED:
            raise self.error(f"unsupported statement {tok.value!r}")
        if tok.kind in ("IDENT", "MACRO") or self.at("{"):
            target = self.lvalue()
            if not self.at("=", "<="):
                raise self.error(f"unexpected {self.tok.value!r} after assignment target",
                                 expected=("=", "<="))
            blocking = self.next().value == "="
            if self.at("#"):
                self._delay()
            elif self.at("@"):
                self._event_control()
            value = self.expression()
            self.expect(";")
            return Assignment(target, value, blocking)
        found = "end of file" if tok.kind == "EOF" else repr(tok.value)
        raise self.error(f"unexpected {found}, wanted a statement",
                         expected=("begin", "if", "case", "assignment", "end"),
                         cls=UnterminatedModule if tok.kind == "EOF" else VerilogSyntaxError)

    def _case(self) -> Case:
        kind = self.next().value
        self.expect("(")
        subject = self.expression()
        self.expect(")")
        items = []
        while not self.at("endcase"):
            if self.tok.kind == "EOF":
                raise self.error("missing 'endcase'", expected=("endcase",),
                                 cls=UnterminatedModule)
            if self.at("default"):
                self.next()
                if self.at(":"):
                    self.next()
                items.append(CaseItem((), self.statement()))
                continue
            labels = [self.expression()]
            while self.at(","):
                self.next()
                labels.append(self.expression())
            self.expect(":")
            items.append(CaseItem(tuple(labels), self.statement()))
        self.next()
        return Case(kind, subject, tuple(items))

    def lvalue(self) -> Expr:
        if self.at("{"):
            self.next()
            items = [self.lvalue()]
            while self.at(","):
                self.next()
                items.append(self.lvalue())
            self.expect("}")
            return Concat(tuple(items))
        tok = self.tok
        if tok.kind not in ("IDENT", "MACRO"):
            raise self.error(f"unexpected {tok.value!r}, wanted assignment target",
                             expected=("identifier", "{"))
        self.next()
        base: Expr = Identifier(tok.value) if tok.kind == "IDENT" else MacroRef(tok.value)
        return self._selects(base)

    # -- expressions ---------------------------------------------------------

    def expression(self) -> Expr:
        cond = self._binary(0)
        if self.at("?"):
            self.next()
            if_true = self.expression()
            self.expect(":")
            if_false = self.expression()
            return Ternary(cond, if_true, if_false)
        return cond

    def _binary(self, level: int) -> Expr:
        if level == len(_BINARY_LEVELS):
            return self._unary()
        ops = _BINARY_LEVELS[level]
        left = self._binary(level + 1)
        while self.tok.kind == "OP" and self.tok.value in ops:
            op = self.next().value
            right = self._binary(level + 1)
            left = Binary(op, left, right)
        return left

    def _unary(self) -> Expr:
        if self.tok.kind == "OP" and self.tok.value in _UNARY_OPS:
            op = self.next().value
            return Unary(op, self._unary())
        return self._primary()

    def _primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "NUMBER":
            self.next()
            return Number(tok.value)
        if tok.kind == "STRING":
            self.next()
            return StringLiteral(tok.value)
        if tok.kind == "IDENT":
            self.next()
            if self.at("("):
                return Call(tok.value, self._call_args())
            return self._selects(Identifier(tok.value))
        if tok.kind == "MACRO":
            self.next()
            if self.at("("):
                self._call_args()
            return self._selects(MacroRef(tok.value))
        if tok.kind == "SYSID":
            self.next()
            args: tuple[Expr, ...] = ()
            if self.at("("):
                args = self._call_args()
            return Call(tok.value, args)
        if self.at("("):
            self.next()
            inner = self.expression()
            self.expect(")")
            return inner
        if self.at("{"):
            self.next()
            first = self.expression()
            if self.at("{"):
                self.next()
                items = self._expr_list("}")
                self.expect("}")
                self.expect("}")
                return Repeat(first, tuple(items))
            items = [first]
            while self.at(","):
                self.next()
                items.append(self.expression())
            self.expect("}")
            return Concat(tuple(items))
        found = "end of file" if tok.kind == "EOF" else repr(tok.value)
        raise self.error(f"unexpected {found} in expression",
                         expected=("identifier", "number", "(", "{"))

    def _expr_list(self, close: str) -> list[Expr]:
        items = [self.expression()]
        while self.at(","):
            self.next()
            items.append(self.expression())
        if not self.at(close):
            raise self.error(f"unexpected {self.tok.value!r}", expected=(",", close))
        return items

    def _call_args(self) -> tuple[Expr, ...]:
        self.expect("(")
        if self.at(")"):
            self.next()
            return ()
        items = self._expr_list(")")
        self.next()
        return tuple(items)

    def _selects(self, base: Expr) -> Expr:
        while self.at("["):
            self.next()
            msb = self.expression()
            if self.at(":", "+:", "-:"):
                op = self.next().value
                lsb = self.expression()
                base = Select(base, msb, lsb, op)
            else:
                base = Select(base, msb)
            self.expect("]")
        return base


class _ModuleContext:
    def __init__(self, name: str) -> None:
        self.name = name
        self.ports: list[str] = []
        self.signals: dict[str, _SignalDraft] = {}
        self.blocks: list[AstBlock] = []

    def declare(self, draft: _SignalDraft, parser: Parser) -> None:
        existing = self.signals.get(draft.name)
        if existing is None:
            self.signals[draft.name] = draft
            return
        # 1995-style ports and `output x; reg x;` pairs refine one signal
        if draft.direction is not Direction.INTERNAL:
            existing.direction = draft.direction
        if draft.explicit_kind:
            existing.net_kind = draft.net_kind
            existing.explicit_kind = True
        if draft.width is not None or draft.raw_width is not None:
            existing.width, existing.raw_width = draft.width, draft.raw_width
        existing.signed = existing.signed or draft.signed
        if existing.direction is Direction.INTERNAL and draft.direction is Direction.INTERNAL \
                and existing.explicit_kind and draft.explicit_kind \
                and draft.name not in self.ports:
            parser.diagnostics.append(Diagnostic(
                parser.path, draft.span.line_start, "REDECLARED",
                f"signal {draft.name!r} declared more than once in {self.name!r}"))

    def add_block(self, block: AstBlock, parser: Parser) -> None:
        span = block.span
        code = parser.data[span.byte_start : span.byte_end].decode("utf-8")
        self.blocks.append(replace(block, referenced_signals=block_identifiers(block),
                                   code=code))


def _plain_int(text: str) -> int | None:
    digits = text.replace("_", "")
    return int(digits) if digits.isdigit() else None


def parse_file(text: str, path: str) -> list[AstModule]:
    """Parse one Verilog file into its modules.

    Raises :class:`~hdlgraph.errors.VerilogSyntaxError` for anything outside
    the supported subset and :class:`~hdlgraph.errors.UnterminatedModule`
    when a module runs off the end of the file.
    """
    return parse_file_with_diagnostics(text, path).modules


def parse_file_with_diagnostics(text: str, path: str) -> ParseResult:
    if not path:
        raise ValueError("path must be nonempty")
    return Parser(text, path).parse()
