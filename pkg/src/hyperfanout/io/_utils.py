from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path
from typing import Optional

from hyperfanout._utils import PathLike, open_text

__all__ = ["FileFormatError", "HypergraphFormatError", "PartitionFormatError"]


class FileFormatError(ValueError):
    """Malformed input file; rendered as ``<source>:<lineno>: <message>``."""

    def __init__(self, message: str, source: Optional[PathLike] = None, lineno: Optional[int] = None) -> None:
        self.message = message
        self.source = None if source is None else str(source)
        self.lineno = lineno
        super().__init__(str(self))

    def __str__(self) -> str:
        where = [part for part in (self.source, None if self.lineno is None else str(self.lineno)) if part]
        return ":".join(where + [f" {self.message}"]) if where else self.message


class HypergraphFormatError(FileFormatError):
    """Malformed hypergraph or edge-list file."""


class PartitionFormatError(FileFormatError):
    """Partition file that does not match its graph."""


def _content_lines(path: PathLike, comment: Optional[str] = None) -> Iterator[tuple[int, str]]:
    # blank lines and comment lines are skipped, line numbers are 1-based
    with open_text(Path(path)) as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.rstrip("\r\n")
            if not stripped.strip():
                continue
            if comment is not None and stripped.lstrip().startswith(comment):
                continue
            yield lineno, stripped


def _parse_int(
    token: str, path: PathLike, lineno: int, what: str, error: type[FileFormatError] = HypergraphFormatError
) -> int:
    try:
        return int(token)
    except ValueError:
        raise error(f"Expected an integer {what}, found {token!r}.", path, lineno) from None
