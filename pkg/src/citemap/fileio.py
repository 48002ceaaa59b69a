"""Small helpers for tab-separated artifacts and content hashing.

All delimited artifacts start with zero or more ``#``-prefixed comment lines
(provenance headers added by the pipeline) followed by one header row naming
the columns.  Readers skip the comment lines, so files remain loadable whether
or not they were produced through the command line front end.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

from .errors import ValidationError


def format_float(x: float) -> str:
    """Shortest decimal form that round-trips a Python float."""
    return repr(float(x))


def write_tsv(
    path: str,
    columns: Sequence[str],
    rows: Iterable[Sequence],
    meta_lines: Sequence[str] = (),
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in meta_lines:
            fh.write(f"# {line}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def read_tsv(path: str) -> tuple[list[str], list[list[str]]]:
    """Return (column names, data rows); comment lines are skipped."""
    columns: list[str] | None = None
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if columns is None:
                columns = parts
            else:
                rows.append(parts)
    if columns is None:
        raise ValidationError(f"{path}: no header row found")
    return columns, rows


def require_columns(path: str, columns: list[str], expected: Sequence[str]) -> None:
    if list(columns) != list(expected):
        raise ValidationError(f"{path}: expected columns {list(expected)!r}, found {columns!r}")


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
