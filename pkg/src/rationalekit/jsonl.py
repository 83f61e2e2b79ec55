"""JSON-lines readers/writers with stable, byte-reproducible output."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import JsonlError


def read_records(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, record) pairs; line numbers are 1-based.

    Blank lines are skipped. Raises JsonlError naming the first bad line.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise JsonlError(f"{path}: line {lineno}: expected a JSON object")
            yield lineno, record


def write_records(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    """Write records one per line with sorted keys; returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record))
            fh.write("\n")
            count += 1
    return count


def dumps(obj: Any) -> str:
    """Canonical single-line JSON: sorted keys, no trailing whitespace."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(", ", ": "))


def write_json(path: str | Path, obj: Any) -> None:
    """Write a single JSON document, pretty-printed but key-sorted for stable bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")
