"""Turn corpus segments and QA pairs into rationale candidates.

The extractor model is prompted to rewrite a text with short rationales
enclosed in <BOT>/<EOT> markers at sentence (or answer-step) boundaries.
Parsing anchors each well-formed span back to a boundary of the original
text, so a candidate's preceding + following always reconstructs the
source byte-for-byte; the rationale is additive, never a rewrite.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from .backends import BackendRole, Gateway, GenerationRequest
from .errors import JsonlError, TemplateError
from .jsonl import read_records, write_records
from .prefilter import Document

log = logging.getLogger(__name__)

BOT_MARKER = "<BOT>"
EOT_MARKER = "<EOT>"

DEFAULT_MAX_SEGMENT_WORDS = 2000

_WORD_RE = re.compile(r"\S+")
_SENTENCE_END_RE = re.compile(r"[.!?]+[\"')\]]*\s+")
_MARKER_RE = re.compile(re.escape(BOT_MARKER) + "|" + re.escape(EOT_MARKER))
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class Origin(str, Enum):
    CORPUS = "corpus"
    QA_DATASET = "qa"


@dataclass(frozen=True)
class Segment:
    doc_id: str
    text: str
    word_count: int
    index_in_doc: int

    @property
    def source_id(self) -> str:
        return f"{self.doc_id}/s{self.index_in_doc}"


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    gold_final: str
    dataset: str
    id: str | None = None

    def __post_init__(self) -> None:
        if self.gold_final not in self.answer:
            raise ValueError("gold_final must be a substring of answer")

    @property
    def source_id(self) -> str:
        if self.id:
            return f"{self.dataset}:{self.id}"
        digest = hashlib.sha1(self.question.encode("utf-8")).hexdigest()[:10]
        return f"{self.dataset}:{digest}"


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt body with {placeholder} slots, plus optional demonstration blocks."""

    name: str
    body: str
    demonstrations: tuple[str, ...] = ()

    def render(self, **values: str) -> str:
        names = set(_PLACEHOLDER_RE.findall(self.body))
        unbound = names - values.keys()
        if unbound:
            raise TemplateError(
                f"template {self.name!r}: unbound placeholders {sorted(unbound)}"
            )
        rendered = _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.body)
        return "\n\n".join([*self.demonstrations, rendered])


def load_template(name: str) -> PromptTemplate:
    """Load one of the packaged templates by bare name (no extension)."""
    path = resources.files("rationalekit").joinpath("templates", f"{name}.txt")
    try:
        body = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise TemplateError(f"no packaged template named {name!r}") from exc
    return PromptTemplate(name=name, body=body)


def template_from_file(path: str | Path) -> PromptTemplate:
    text = Path(path).read_text(encoding="utf-8")
    return PromptTemplate(name=Path(path).stem, body=text)


@dataclass(frozen=True)
class RationaleCandidate:
    """A rationale proposed at one boundary of a source text.

    For QA origin the source text is question + newline + answer, so the
    preceding field always carries the question and the steps so far.
    """

    source_id: str
    position: int
    preceding: str
    rationale: str
    following: str
    origin: Origin
    source: str = "unknown"

    @property
    def candidate_id(self) -> str:
        digest = hashlib.sha1(self.rationale.encode("utf-8")).hexdigest()[:8]
        return f"{self.source_id}:{self.position}:{digest}"

    @property
    def source_text(self) -> str:
        return self.preceding + self.following


@dataclass
class ExtractionCounts:
    """Partition of every parsed span: kept + malformed + leaked = total."""

    kept: int = 0
    malformed: int = 0
    leaked: int = 0

    @property
    def total(self) -> int:
        return self.kept + self.malformed + self.leaked

    def merge(self, other: "ExtractionCounts") -> None:
        self.kept += other.kept
        self.malformed += other.malformed
        self.leaked += other.leaked


# -- sentence and step splitting (frozen rules) --


def split_sentences(text: str) -> list[str]:
    """Rule-based splitter: a sentence ends at terminal punctuation followed by
    whitespace; the whitespace stays attached to the sentence it follows.
    Concatenating the pieces reproduces the input exactly."""
    if not text:
        return []
    pieces: list[str] = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        pieces.append(text[start : match.end()])
        start = match.end()
    if start < len(text):
        pieces.append(text[start:])
    return pieces


def split_steps(answer: str) -> list[str]:
    """Reasoning steps of a QA answer: non-blank lines, falling back to
    sentences when the answer is a single line. Blank lines attach to the
    preceding step; concatenation reproduces the answer exactly."""
    lines = answer.splitlines(keepends=True)
    steps: list[str] = []
    for line in lines:
        if steps and not line.strip():
            steps[-1] += line
        else:
            steps.append(line)
    if len(steps) > 1 and not steps[0].strip():
        steps[1] = steps[0] + steps[1]
        del steps[0]
    if len(steps) <= 1:
        return split_sentences(answer)
    return steps


def word_count(text: str) -> int:
    return len(_WORD_RE.findall(text))


def segment(doc: Document, max_words: int = DEFAULT_MAX_SEGMENT_WORDS) -> list[Segment]:
    """Greedy packing of whole sentences into segments of at most max_words.

    A single sentence longer than max_words is hard-split at word boundaries.
    Concatenating the segments reproduces the document text exactly.
    """
    if not doc.text:
        return []
    pieces: list[str] = []
    for sentence in split_sentences(doc.text):
        if word_count(sentence) > max_words:
            pieces.extend(_hard_split(sentence, max_words))
        else:
            pieces.append(sentence)
    texts: list[str] = []
    current: list[str] = []
    current_words = 0
    for piece in pieces:
        wc = word_count(piece)
        if current and current_words + wc > max_words:
            texts.append("".join(current))
            current, current_words = [], 0
        current.append(piece)
        current_words += wc
    if current:
        texts.append("".join(current))
    return [
        Segment(doc_id=doc.id, text=t, word_count=word_count(t), index_in_doc=i)
        for i, t in enumerate(texts)
    ]


def _hard_split(sentence: str, max_words: int) -> list[str]:
    spans = list(_WORD_RE.finditer(sentence))
    if len(spans) <= max_words:
        return [sentence]
    parts: list[str] = []
    previous = 0
    for k in range(max_words, len(spans), max_words):
        cut = spans[k].start()
        parts.append(sentence[previous:cut])
        previous = cut
    parts.append(sentence[previous:])
    return parts


# -- marker parsing and anchoring --


@dataclass(frozen=True)
class _ParsedSpan:
    start: int
    end: int
    body: str


def parse_marked_spans(completion: str) -> tuple[list[_ParsedSpan], int]:
    """Find well-formed <BOT>...<EOT> spans; return (spans, malformed count).

    A marker that opens while another span is open, closes without an open
    span, stays unclosed at the end, or wraps an empty body counts as one
    malformed span.
    """
    spans: list[_ParsedSpan] = []
    malformed = 0
    open_start: int | None = None
    for match in _MARKER_RE.finditer(completion):
        if match.group(0) == BOT_MARKER:
            if open_start is not None:
                malformed += 1
            open_start = match.start()
        else:
            if open_start is None:
                malformed += 1
                continue
            body = completion[open_start + len(BOT_MARKER) : match.start()].strip()
            if body:
                spans.append(_ParsedSpan(start=open_start, end=match.end(), body=body))
            else:
                malformed += 1
            open_start = None
    if open_start is not None:
        malformed += 1
    return spans, malformed


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def _anchor_spans(
    completion: str,
    source_id: str,
    source_text: str,
    targets: dict[str, tuple[int, int]],
    origin: Origin,
    source: str,
    gold_final: str | None = None,
) -> tuple[list[RationaleCandidate], ExtractionCounts]:
    """Map parsed spans to candidates at the boundaries named by `targets`
    (whitespace-normalized source prefix -> (position, offset)).

    A span anchors when the completion text before it (markers and earlier
    rationales removed) matches a target prefix up to whitespace; spans that
    match no boundary are counted malformed, spans containing the gold final
    answer are counted leaked.
    """
    spans, malformed = parse_marked_spans(completion)
    counts = ExtractionCounts(malformed=malformed)
    candidates: list[RationaleCandidate] = []
    clean_parts: list[str] = []
    consumed = 0
    for span in spans:
        clean_parts.append(completion[consumed:span.start])
        consumed = span.end
        hit = targets.get(_normalize_ws("".join(clean_parts)))
        if hit is None:
            counts.malformed += 1
            continue
        if gold_final is not None and contains_answer(span.body, gold_final):
            counts.leaked += 1
            continue
        position, offset = hit
        counts.kept += 1
        candidates.append(
            RationaleCandidate(
                source_id=source_id,
                position=position,
                preceding=source_text[:offset],
                rationale=span.body,
                following=source_text[offset:],
                origin=origin,
                source=source,
            )
        )
    return candidates, counts


def contains_answer(rationale: str, gold_final: str) -> bool:
    """Leakage test: does the rationale contain the gold final answer?

    Commas are stripped and a trailing period on the gold is ignored, so
    "1,234." still matches "1234". Numeric golds must not sit inside a longer
    number; other golds match on word boundaries, case-sensitively.
    """
    haystack = _normalize_ws(rationale).replace(",", "")
    needle = _normalize_ws(gold_final).replace(",", "").rstrip(".")
    if not needle:
        return False
    if re.fullmatch(r"[-+]?\d*\.?\d+", needle):
        return re.search(rf"(?<![\d.]){re.escape(needle)}(?!\d)", haystack) is not None
    return re.search(rf"\b{re.escape(needle)}\b", haystack) is not None


# -- extraction entry points --


def extract_from_corpus(
    seg: Segment,
    template: PromptTemplate,
    gateway: Gateway,
    role: BackendRole,
    *,
    source: str = "unknown",
    num_samples: int = 1,
    temperature: float = 0.7,
    top_k: int = 3,
    max_tokens: int = 1024,
    seed: int | None = None,
) -> tuple[list[RationaleCandidate], ExtractionCounts]:
    """One prompt per segment; candidates anchor to its sentence boundaries."""
    prompt = template.render(context=seg.text)
    completions = gateway.generate(
        GenerationRequest(
            prompt=prompt,
            num_samples=num_samples,
            temperature=temperature,
            top_k=top_k,
            max_tokens=max_tokens,
            seed=seed,
        ),
        role,
    )
    targets: dict[str, tuple[int, int]] = {}
    for position, offset in _sentence_boundaries(seg.text):
        targets.setdefault(_normalize_ws(seg.text[:offset]), (position, offset))
    candidates: list[RationaleCandidate] = []
    counts = ExtractionCounts()
    for completion in completions:
        found, sub = _anchor_spans(
            completion, seg.source_id, seg.text, targets, Origin.CORPUS, source
        )
        candidates.extend(found)
        counts.merge(sub)
    if counts.malformed:
        log.warning(
            "extraction: %d malformed span(s) while parsing segment %s",
            counts.malformed,
            seg.source_id,
        )
    return _canonical_order(candidates), counts


def extract_from_qa(
    pair: QAPair,
    template: PromptTemplate,
    gateway: Gateway,
    role: BackendRole,
    *,
    num_samples: int = 1,
    temperature: float = 0.7,
    top_k: int = 3,
    max_tokens: int = 1024,
    seed: int | None = None,
) -> tuple[list[RationaleCandidate], ExtractionCounts]:
    """Candidates between consecutive answer steps, with leakage control:
    any rationale containing the gold final answer is discarded and counted."""
    steps = split_steps(pair.answer)
    if len(steps) < 2:
        return [], ExtractionCounts()
    prompt = template.render(question=pair.question, answer=pair.answer)
    completions = gateway.generate(
        GenerationRequest(
            prompt=prompt,
            num_samples=num_samples,
            temperature=temperature,
            top_k=top_k,
            max_tokens=max_tokens,
            seed=seed,
        ),
        role,
    )
    source_text = pair.question + "\n" + pair.answer
    base = len(pair.question) + 1
    # Completions usually restate only the answer, so each boundary is keyed
    # by both the answer-only prefix and the full question+answer prefix.
    targets: dict[str, tuple[int, int]] = {}
    offset = 0
    for position, step in enumerate(steps[:-1], start=1):
        offset += len(step)
        targets.setdefault(_normalize_ws(pair.answer[:offset]), (position, base + offset))
        targets.setdefault(_normalize_ws(source_text[: base + offset]), (position, base + offset))
    candidates: list[RationaleCandidate] = []
    counts = ExtractionCounts()
    for completion in completions:
        found, sub = _anchor_spans(
            completion,
            pair.source_id,
            source_text,
            targets,
            Origin.QA_DATASET,
            pair.dataset,
            gold_final=pair.gold_final,
        )
        candidates.extend(found)
        counts.merge(sub)
    return _canonical_order(candidates), counts


def _sentence_boundaries(text: str) -> list[tuple[int, int]]:
    """Internal sentence boundaries as (position, char offset); the end of the
    text is excluded because a rationale there has no future tokens to help."""
    sentences = split_sentences(text)
    boundaries: list[tuple[int, int]] = []
    offset = 0
    for position, sentence in enumerate(sentences[:-1], start=1):
        offset += len(sentence)
        boundaries.append((position, offset))
    return boundaries


def _canonical_order(candidates: list[RationaleCandidate]) -> list[RationaleCandidate]:
    return sorted(candidates, key=lambda c: (c.source_id, c.position, c.rationale))


# -- JSONL interfaces --


def candidate_to_record(candidate: RationaleCandidate) -> dict:
    return {
        "source_id": candidate.source_id,
        "position": candidate.position,
        "preceding": candidate.preceding,
        "rationale": candidate.rationale,
        "following": candidate.following,
        "origin": candidate.origin.value,
        "source": candidate.source,
    }


def write_candidates(path: str | Path, candidates: Sequence[RationaleCandidate]) -> int:
    return write_records(path, (candidate_to_record(c) for c in candidates))


def load_candidates(path: str | Path) -> Iterator[RationaleCandidate]:
    for lineno, record in read_records(path):
        try:
            yield RationaleCandidate(
                source_id=str(record["source_id"]),
                position=int(record["position"]),
                preceding=str(record["preceding"]),
                rationale=str(record["rationale"]),
                following=str(record["following"]),
                origin=Origin(record["origin"]),
                source=str(record.get("source", "unknown")),
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad candidate record: {exc}") from exc


def load_qa_pairs(path: str | Path) -> Iterator[QAPair]:
    for lineno, record in read_records(path):
        try:
            yield QAPair(
                question=str(record["question"]),
                answer=str(record["answer"]),
                gold_final=str(record["gold_final"]),
                dataset=str(record.get("dataset", "unknown")),
                id=str(record["id"]) if "id" in record else None,
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad QA record: {exc}") from exc
