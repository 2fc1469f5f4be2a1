"""Exception hierarchy shared by every hdlgraph subsystem."""

from __future__ import annotations


class HdlGraphError(Exception):
    """Base class for all domain errors raised by hdlgraph."""


class PreconditionError(HdlGraphError, ValueError):
    """An argument violated a documented precondition."""


# frontend


class VerilogSyntaxError(HdlGraphError):
    """Source text falls outside the supported Verilog subset."""

    def __init__(
        self,
        message: str,
        *,
        path: str = "",
        line: int = 0,
        column: int = 0,
        expected: tuple[str, ...] = (),
    ) -> None:
        self.message = message
        self.path = path
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        where = f"{path}:{line}:{column}" if path else f"{line}:{column}"
        text = f"{where}: {message}"
        if self.expected:
            text += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(text)


class UnterminatedModule(VerilogSyntaxError):
    """A module body ran into end of file without ``endmodule``."""


# graph store


class UnknownNode(HdlGraphError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "unknown node"


class WrongKind(HdlGraphError, TypeError):
    pass


class FormatError(HdlGraphError):
    def __init__(self, message: str, line: int) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class VersionError(HdlGraphError):
    pass


# scoring


class DimensionMismatch(HdlGraphError, ValueError):
    pass


class TransportError(HdlGraphError):
    def __init__(self, message: str, batch_index: int | None = None) -> None:
        self.batch_index = batch_index
        if batch_index is not None:
            message = f"batch {batch_index}: {message}"
        super().__init__(message)


class ProtocolError(TransportError):
    pass


# retrieval / dataflow


class EmptyQuery(HdlGraphError, ValueError):
    pass


class UnknownLevelQuery(EmptyQuery):
    pass


class EmptyDatabase(HdlGraphError):
    pass


class EmptySeed(HdlGraphError, ValueError):
    pass


class UnparsableFragment(HdlGraphError):
    pass


# eval


class EmptyInput(HdlGraphError, ValueError):
    pass


class DomainError(HdlGraphError, ValueError):
    pass


class UnknownBenchmarkNode(HdlGraphError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown benchmark node"


# benchgen


class ProviderError(HdlGraphError):
    pass


class EmptyGeneration(HdlGraphError):
    pass
