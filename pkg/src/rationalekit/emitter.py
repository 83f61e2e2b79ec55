"""Convert kept rationale candidates into (context -> rationale) training pairs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .errors import JsonlError
from .extraction import Origin, RationaleCandidate
from .filtering import FilterReport, SourceStats, resolve_tau
from .jsonl import read_records, write_records

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class TrainingExample:
    """One fine-tuning pair: the candidate's preceding context in, its
    rationale out. QA contexts already carry question + steps so far."""

    context: str
    target: str
    origin: Origin
    source_id: str


@dataclass(frozen=True)
class EmitReport:
    kept_in: int
    duplicates: int
    emitted: int

    def __post_init__(self) -> None:
        if self.emitted != self.kept_in - self.duplicates:
            raise ValueError("emit counts do not reconcile")


def emit(
    kept: Sequence[RationaleCandidate],
    *,
    max_context_words: int | None = None,
) -> tuple[list[TrainingExample], EmitReport]:
    """One example per kept candidate, deterministically ordered by
    (source_id, position) and de-duplicated on (context, target).

    Contexts longer than max_context_words are truncated from the left at a
    word boundary so the text nearest the rationale survives.
    """
    ordered = sorted(kept, key=lambda c: (c.source_id, c.position, c.rationale))
    examples: list[TrainingExample] = []
    seen: set[tuple[str, str]] = set()
    duplicates = 0
    for candidate in ordered:
        context = candidate.preceding
        if max_context_words is not None:
            context = truncate_left(context, max_context_words)
        key = (context, candidate.rationale)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        examples.append(
            TrainingExample(
                context=context,
                target=candidate.rationale,
                origin=candidate.origin,
                source_id=candidate.source_id,
            )
        )
    report = EmitReport(kept_in=len(ordered), duplicates=duplicates, emitted=len(examples))
    return examples, report


def truncate_left(text: str, max_words: int) -> str:
    spans = list(_WORD_RE.finditer(text))
    if len(spans) <= max_words:
        return text
    return text[spans[len(spans) - max_words].start() :]


def stats(
    candidates_before: Mapping[str, int],
    candidates_after: Mapping[str, int],
    docs: Mapping[str, int],
    tau_f: float | Mapping[str, float] = 0.0,
) -> FilterReport:
    """Per-source statistics rows; percentage-left guards the zero-before case."""
    sources = sorted(set(candidates_before) | set(candidates_after) | set(docs))
    rows = [
        SourceStats(
            source=source,
            docs=docs.get(source),
            rationales=int(candidates_before.get(source, 0)),
            kept=int(candidates_after.get(source, 0)),
            tau_f=resolve_tau(tau_f, source),
        )
        for source in sources
    ]
    return FilterReport(rows=rows)


# -- JSONL interfaces --


def example_to_record(example: TrainingExample) -> dict:
    return {
        "context": example.context,
        "target": example.target,
        "origin": example.origin.value,
        "source_id": example.source_id,
    }


def write_examples(path: str | Path, examples: Sequence[TrainingExample]) -> int:
    return write_records(path, (example_to_record(e) for e in examples))


def load_examples(path: str | Path) -> Iterator[TrainingExample]:
    for lineno, record in read_records(path):
        try:
            yield TrainingExample(
                context=str(record["context"]),
                target=str(record["target"]),
                origin=Origin(record["origin"]),
                source_id=str(record["source_id"]),
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad example record: {exc}") from exc
