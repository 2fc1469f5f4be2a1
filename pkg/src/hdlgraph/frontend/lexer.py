"""Tokenizer for the supported Verilog subset.

Compiler directives are lexed as ``DIRECTIVE`` tokens and resolved by
:func:`apply_directives`, which keeps the first branch of every
```ifdef``/```ifndef`` group. Working on tokens rather than rewriting text
means every surviving token keeps its original offset.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..diagnostics import Diagnostic
from ..errors import VerilogSyntaxError

KEYWORDS = frozenset(
    """
    module macromodule endmodule input output inout wire reg integer tri wand wor
    supply0 supply1 signed parameter localparam assign always initial begin end if
    else case casez casex endcase default posedge negedge or
    generate endgenerate genvar function endfunction task endtask for while repeat
    forever fork join disable wait specify endspecify defparam primitive endprimitive
    real realtime time event
    """.split()
)

# Keywords that start constructs this frontend deliberately rejects.
UNSUPPORTED = frozenset(
    """
    generate endgenerate genvar function endfunction task endtask for while repeat
    forever fork join disable wait specify endspecify defparam primitive endprimitive
    real realtime time event
    """.split()
)

SYSTEMVERILOG_WORDS = frozenset(
    """
    logic always_ff always_comb always_latch interface endinterface package
    endpackage import typedef enum struct class endclass program endprogram modport
    """.split()
)

GATE_PRIMITIVES = frozenset(
    "and nand or nor xor xnor buf not bufif0 bufif1 notif0 notif1 pullup pulldown".split()
)

_OPERATORS = sorted(
    """
    <<< >>> === !== == != <= >= && || << >> ** ~& ~| ~^ ^~ +: -: ( ) [ ] { } ; , . :
    = < > + - * / % ! ~ & | ^ ? @ #
    """.split(),
    key=len,
    reverse=True,
)

_DIRECTIVES_WITH_NAME = frozenset({"ifdef", "ifndef", "elsif", "undef"})
_DIRECTIVES_TO_EOL = frozenset(
    {"define", "include", "timescale", "default_nettype", "line", "pragma",
     "unconnected_drive"}
)
_DIRECTIVES_BARE = frozenset(
    {"else", "endif", "resetall", "celldefine", "endcelldefine", "nounconnected_drive"}
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")
_SYSID_RE = re.compile(r"\$[A-Za-z0-9_$]+")
_NUMBER_RE = re.compile(
    r"""
    (?:[0-9][0-9_]*\s*)?'[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ?_]+   # based literal
    | [0-9][0-9_]*\.[0-9][0-9_]*(?:[eE][+-]?[0-9]+)?           # real
    | [0-9][0-9_]*[eE][+-]?[0-9]+
    | [0-9][0-9_]*                                              # decimal
    """,
    re.VERBOSE,
)
_WS_RE = re.compile(r"[ \t\r\n\f\v]+")


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT KEYWORD NUMBER STRING OP SYSID MACRO DIRECTIVE EOF
    value: str
    start: int  # character offsets into the source text
    end: int
    line: int
    col: int
    arg: str = ""  # directive operand

    def __repr__(self) -> str:
        return f"Token({self.kind},{self.value!r}@{self.line}:{self.col})"


class Lexer:
    def __init__(self, text: str, path: str = "") -> None:
        self.text = text
        self.path = path
        self.pos = 0
        self.line = 1
        self.line_start = 0

    def _error(self, message: str) -> VerilogSyntaxError:
        return VerilogSyntaxError(
            message, path=self.path, line=self.line, column=self.pos - self.line_start + 1
        )

    def _advance_to(self, new_pos: int) -> None:
        chunk = self.text[self.pos : new_pos]
        nl = chunk.count("\n")
        if nl:
            self.line += nl
            self.line_start = self.pos + chunk.rfind("\n") + 1
        self.pos = new_pos

    def _skip_trivia(self) -> None:
        text = self.text
        while self.pos < len(text):
            m = _WS_RE.match(text, self.pos)
            if m:
                self._advance_to(m.end())
                continue
            if text.startswith("//", self.pos):
                nl = text.find("\n", self.pos)
                self._advance_to(len(text) if nl < 0 else nl)
                continue
            if text.startswith("/*", self.pos):
                close = text.find("*/", self.pos + 2)
                if close < 0:
                    raise self._error("unterminated block comment")
                self._advance_to(close + 2)
                continue
            break

    def tokens(self) -> list[Token]:
        out: list[Token] = []
        text = self.text
        while True:
            self._skip_trivia()
            if self.pos >= len(text):
                out.append(Token("EOF", "", len(text), len(text), self.line,
                                 self.pos - self.line_start + 1))
                return out
            start, line, col = self.pos, self.line, self.pos - self.line_start + 1
            ch = text[start]
            if ch == "`":
                out.append(self._directive(start, line, col))
                continue
            if ch == "\\":
                m = re.compile(r"\\[^\s]+").match(text, start)
                assert m is not None
                self._advance_to(m.end())
                out.append(Token("IDENT", m.group()[1:], start, self.pos, line, col))
                continue
            if ch == '"':
                end = start + 1
                while end < len(text) and text[end] != '"':
                    if text[end] == "\n":
                        raise self._error("newline in string literal")
                    end += 2 if text[end] == "\\" else 1
                if end >= len(text):
                    raise self._error("unterminated string literal")
                self._advance_to(end + 1)
                out.append(Token("STRING", text[start : end + 1], start, self.pos, line, col))
                continue
            m = _NUMBER_RE.match(text, start)
            if m and (ch.isdigit() or ch == "'"):
                self._advance_to(m.end())
                value = re.sub(r"\s+", "", m.group())
                out.append(Token("NUMBER", value, start, self.pos, line, col))
                continue
            m = _IDENT_RE.match(text, start)
            if m:
                self._advance_to(m.end())
                word = m.group()
                kind = "KEYWORD" if word in KEYWORDS else "IDENT"
                out.append(Token(kind, word, start, self.pos, line, col))
                continue
            m = _SYSID_RE.match(text, start)
            if m:
                self._advance_to(m.end())
                out.append(Token("SYSID", m.group(), start, self.pos, line, col))
                continue
            for op in _OPERATORS:
                if text.startswith(op, start):
                    self._advance_to(start + len(op))
                    out.append(Token("OP", op, start, self.pos, line, col))
                    break
            else:
                raise self._error(f"unexpected character {ch!r}")

    def _directive(self, start: int, line: int, col: int) -> Token:
        text = self.text
        m = _IDENT_RE.match(text, start + 1)
        if not m:
            raise self._error("stray backtick")
        name = m.group()
        self._advance_to(m.end())
        if name in _DIRECTIVES_WITH_NAME:
            self._skip_inline_ws()
            arg = _IDENT_RE.match(text, self.pos)
            if not arg:
                raise self._error(f"`{name} requires a macro name")
            self._advance_to(arg.end())
            return Token("DIRECTIVE", name, start, self.pos, line, col, arg.group())
        if name in _DIRECTIVES_TO_EOL:
            end = self.pos
            while True:
                nl = text.find("\n", end)
                if nl < 0:
                    end = len(text)
                    break
                # backslash continuation, only meaningful for `define
                if name == "define" and text[end:nl].rstrip("\r").endswith("\\"):
                    end = nl + 1
                    continue
                end = nl
                break
            arg_text = text[self.pos : end].strip()
            self._advance_to(end)
            return Token("DIRECTIVE", name, start, self.pos, line, col, arg_text)
        if name in _DIRECTIVES_BARE:
            return Token("DIRECTIVE", name, start, self.pos, line, col)
        return Token("MACRO", name, start, self.pos, line, col)

    def _skip_inline_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1


def apply_directives(tokens: list[Token], path: str = "") -> tuple[list[Token], list[Diagnostic]]:
    """Drop directive tokens, keeping only the first branch of conditionals."""
    out: list[Token] = []
    diags: list[Diagnostic] = []
    # stack entries: [active_before, in_first_branch]
    stack: list[list[bool]] = []

    def active() -> bool:
        return all(frame[0] and frame[1] for frame in stack)

    for tok in tokens:
        if tok.kind != "DIRECTIVE":
            if active() or tok.kind == "EOF":
                out.append(tok)
            continue
        name = tok.value
        if name in ("ifdef", "ifndef"):
            if active():
                diags.append(Diagnostic(path, tok.line, "IFDEF_STRIPPED",
                                        f"`{name} {tok.arg}: kept first branch only"))
            stack.append([active(), True])
        elif name in ("elsif", "else"):
            if not stack:
                raise VerilogSyntaxError(f"`{name} without `ifdef", path=path,
                                         line=tok.line, column=tok.col)
            stack[-1][1] = False
        elif name == "endif":
            if not stack:
                raise VerilogSyntaxError("`endif without `ifdef", path=path,
                                         line=tok.line, column=tok.col)
            stack.pop()
        elif not active():
            continue
        elif name == "include":
            diags.append(Diagnostic(path, tok.line, "INCLUDE_SKIPPED",
                                    f"`include {tok.arg} not expanded"))
        elif name == "define":
            diags.append(Diagnostic(path, tok.line, "DEFINE_SKIPPED",
                                    f"`define {tok.arg.split()[0] if tok.arg else ''} not expanded"))
    if stack:
        raise VerilogSyntaxError("unterminated `ifdef", path=path,
                                 line=tokens[-1].line, column=tokens[-1].col)
    return out, diags


def tokenize(text: str, path: str = "") -> tuple[list[Token], list[Diagnostic]]:
    return apply_directives(Lexer(text, path).tokens(), path)
