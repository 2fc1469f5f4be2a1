from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True, order=True)
class Diagnostic:
    """A non-fatal warning record, kept apart from results."""

    file: str
    line: int
    code: str
    message: str

    def to_dict(self) -> dict:
        return asdict(self)
