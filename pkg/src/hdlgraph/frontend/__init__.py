"""Verilog-2005 subset frontend: lexer, parser and AST."""

from .ast import (
    AstBlock,
    AstModule,
    AstSignal,
    BlockKind,
    Direction,
    NetKind,
    SourceSpan,
    block_identifiers,
)
from .files import list_repository_files
from .parser import ParseResult, parse_file, parse_file_with_diagnostics

__all__ = [
    "AstBlock",
    "AstModule",
    "AstSignal",
    "BlockKind",
    "Direction",
    "NetKind",
    "ParseResult",
    "SourceSpan",
    "block_identifiers",
    "list_repository_files",
    "parse_file",
    "parse_file_with_diagnostics",
]
