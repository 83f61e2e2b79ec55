"""Select reasoning-rich documents by cosine similarity to a reference centroid.

A document is kept when its embedding's cosine similarity to the centroid of
reference reasoning texts meets the threshold (inclusive) and its backend
token count does not exceed the length cap.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .backends import BackendRole, EmbeddingVector, Gateway
from .errors import DimensionMismatch, EmptyReference, JsonlError, KitError, ZeroVector
from .jsonl import read_records, write_records

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.3
DEFAULT_MAX_TOKENS = 2000


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source: str
    token_count: int


@dataclass(frozen=True)
class PrefilterConfig:
    centroid: EmbeddingVector
    alpha: float = DEFAULT_ALPHA
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if not -1.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [-1, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ScoredDocument:
    document: Document
    similarity: float


@dataclass
class SourceCounts:
    seen: int = 0
    kept: int = 0
    errors: int = 0


@dataclass
class PrefilterReport:
    per_source: dict[str, SourceCounts] = field(default_factory=dict)

    def record(self, source: str, *, kept: bool, error: bool = False) -> None:
        counts = self.per_source.setdefault(source, SourceCounts())
        counts.seen += 1
        if error:
            counts.errors += 1
        elif kept:
            counts.kept += 1

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {
            source: {"seen": c.seen, "kept": c.kept, "errors": c.errors}
            for source, c in sorted(self.per_source.items())
        }


def centroid(reference_texts: Sequence[str], gateway: Gateway, role: BackendRole) -> EmbeddingVector:
    """Element-wise arithmetic mean of the embeddings of `reference_texts`."""
    if not reference_texts:
        raise EmptyReference("centroid needs at least one reference text")
    vectors = [gateway.embed(text, role) for text in reference_texts]
    dim = vectors[0].dim
    for vector in vectors:
        if vector.dim != dim:
            raise DimensionMismatch(f"reference embedding dims differ: {vector.dim} != {dim}")
    n = len(vectors)
    means = tuple(math.fsum(v.values[i] for v in vectors) / n for i in range(dim))
    return EmbeddingVector(values=means)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|), in [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cosine needs equal dims, got {a.dim} and {b.dim}")
    norm_a = math.sqrt(math.fsum(x * x for x in a.values))
    norm_b = math.sqrt(math.fsum(x * x for x in b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine is undefined for an all-zero vector")
    value = math.fsum(x * y for x, y in zip(a.values, b.values)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


def prefilter(
    docs: Iterable[Document],
    config: PrefilterConfig,
    gateway: Gateway,
    role: BackendRole,
    *,
    jobs: int = 1,
) -> tuple[list[ScoredDocument], PrefilterReport]:
    """Apply both keep predicates to every document.

    Per-document embedding failures are logged and counted in the report
    instead of aborting the stream. The kept set is independent of input
    order and of the worker count.
    """
    doc_list = list(docs)
    report = PrefilterReport()

    def score(doc: Document) -> tuple[Document, float | None]:
        try:
            return doc, cosine(gateway.embed(doc.text, role), config.centroid)
        except KitError as exc:
            log.warning("prefilter: skipping document %s: %s", doc.id, exc)
            return doc, None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scored = list(pool.map(score, doc_list))
    else:
        scored = [score(doc) for doc in doc_list]

    kept: list[ScoredDocument] = []
    for doc, similarity in scored:
        if similarity is None:
            report.record(doc.source, kept=False, error=True)
            continue
        keep = similarity >= config.alpha and doc.token_count <= config.max_tokens
        report.record(doc.source, kept=keep)
        if keep:
            kept.append(ScoredDocument(document=doc, similarity=similarity))
    return kept, report


# -- JSONL interfaces: {id, text, source} in, same plus similarity out --


def load_documents(
    path: str | Path,
    *,
    gateway: Gateway | None = None,
    scorer_role: BackendRole | None = None,
) -> Iterator[Document]:
    """Read a corpus file; token_count is taken from the record or counted
    by the scoring backend when missing."""
    for lineno, record in read_records(path):
        try:
            doc_id = str(record["id"])
            text = str(record["text"])
            source = str(record.get("source", "unknown"))
        except KeyError as exc:
            raise JsonlError(f"{path}: line {lineno}: missing field {exc}") from exc
        token_count = record.get("token_count")
        if token_count is None:
            if gateway is None or scorer_role is None:
                raise JsonlError(
                    f"{path}: line {lineno}: no token_count and no scoring backend bound"
                )
            token_count = gateway.count_tokens(text, scorer_role)
        yield Document(id=doc_id, text=text, source=source, token_count=int(token_count))


def write_kept(path: str | Path, kept: Sequence[ScoredDocument]) -> int:
    records = (
        {
            "id": sd.document.id,
            "text": sd.document.text,
            "source": sd.document.source,
            "token_count": sd.document.token_count,
            "similarity": sd.similarity,
        }
        for sd in kept
    )
    return write_records(path, records)
