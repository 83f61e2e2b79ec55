"""Score rationale candidates by their weighted future-token loss gain.

A candidate is scored twice: the future text's weighted cross-entropy with
the rationale inserted after its preceding context, and without it. The
gain is loss_without - loss_with, so a helpful rationale (one that makes
the future text easier to predict) has positive gain, and a candidate is
kept when its gain meets the threshold.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .backends import BackendRole, Gateway
from .errors import InsufficientLabels, JsonlError, NonFiniteLoss
from .extraction import RationaleCandidate
from .jsonl import read_records, write_records

log = logging.getLogger(__name__)

HELPFUL = "helpful"
UNHELPFUL = "unhelpful"

DEFAULT_DECAY = 0.9
DEFAULT_HORIZON = 64


@dataclass(frozen=True)
class WeightSchedule:
    """Per-token weights w_k = decay**k, built by repeated multiplication.

    The horizon caps how many future tokens are scored; with the default
    decay the truncated tail is negligible (0.9**64 < 0.2%).
    """

    decay: float = DEFAULT_DECAY
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self) -> None:
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def weights(self, count: int) -> list[float]:
        out: list[float] = []
        w = 1.0
        for _ in range(count):
            out.append(w)
            w *= self.decay
        return out


@dataclass
class FilterVerdict:
    candidate_id: str
    source: str
    loss_with: float
    loss_without: float
    gain: float
    kept: bool | None = None
    tau_f: float | None = None


def join_context(left: str, right: str) -> str:
    """Concatenate scoring-context parts, inserting one space only when
    neither side supplies whitespace at the junction."""
    if not left:
        return right
    if not right:
        return left
    if left[-1].isspace() or right[0].isspace():
        return left + right
    return left + " " + right


def future_loss(
    preceding: str,
    rationale_or_empty: str,
    following: str,
    schedule: WeightSchedule,
    gateway: Gateway,
    scorer: BackendRole,
) -> float:
    """Weighted cross-entropy of the future text given context and rationale.

    Returns -sum over the first min(horizon, n) backend tokens of `following`
    of w_k * logprob(token_k | preceding, rationale, earlier following
    tokens). An empty rationale yields the no-rationale baseline loss.

    Both runs score an identical whitespace junction before `following`, so
    the with/without losses always compare the same continuation tokens.
    """
    if not following:
        raise ValueError("following must be non-empty")
    prefix = join_context(preceding, rationale_or_empty)
    if prefix and not prefix[-1].isspace() and not following[0].isspace():
        prefix += " "
    scores = gateway.score_continuation(prefix, following, scorer)
    limit = min(schedule.horizon, len(scores))
    weights = schedule.weights(limit)
    terms: list[float] = []
    for k in range(limit):
        logprob = scores[k].logprob
        if not math.isfinite(logprob):
            raise NonFiniteLoss(
                f"non-finite logprob for token {scores[k].token!r} at position {k}"
            )
        terms.append(weights[k] * logprob)
    return -math.fsum(terms)


def score_candidate(
    candidate: RationaleCandidate,
    schedule: WeightSchedule,
    gateway: Gateway,
    scorer: BackendRole,
) -> FilterVerdict:
    """Both losses for one candidate; kept/tau_f stay unset until filtering."""
    loss_without = future_loss(
        candidate.preceding, "", candidate.following, schedule, gateway, scorer
    )
    loss_with = future_loss(
        candidate.preceding, candidate.rationale, candidate.following, schedule, gateway, scorer
    )
    return FilterVerdict(
        candidate_id=candidate.candidate_id,
        source=candidate.source,
        loss_with=loss_with,
        loss_without=loss_without,
        gain=loss_without - loss_with,
    )


def score_candidates(
    candidates: Sequence[RationaleCandidate],
    schedule: WeightSchedule,
    gateway: Gateway,
    scorer: BackendRole,
    *,
    jobs: int = 1,
) -> tuple[list[FilterVerdict], int]:
    """Score a batch; candidates with non-finite losses are dropped, not fatal.

    Verdicts come back ordered by candidate_id regardless of worker count.
    """

    def one(candidate: RationaleCandidate) -> FilterVerdict | None:
        try:
            return score_candidate(candidate, schedule, gateway, scorer)
        except NonFiniteLoss as exc:
            log.warning("filter: dropping candidate %s: %s", candidate.candidate_id, exc)
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, candidates))
    else:
        results = [one(c) for c in candidates]
    verdicts = sorted((v for v in results if v is not None), key=lambda v: v.candidate_id)
    return verdicts, sum(1 for v in results if v is None)


def resolve_tau(tau_f: float | Mapping[str, float], source: str) -> float:
    if isinstance(tau_f, Mapping):
        if source in tau_f:
            return float(tau_f[source])
        return float(tau_f.get("default", 0.0))
    return float(tau_f)


def filter_verdicts(
    verdicts: Sequence[FilterVerdict],
    tau_f: float | Mapping[str, float],
    *,
    docs: Mapping[str, int] | None = None,
) -> tuple[list[FilterVerdict], "FilterReport"]:
    """Mark each verdict kept iff gain >= its source's threshold.

    Each verdict is judged independently, so input order never changes an
    outcome. The report carries per-source totals in the statistics-table
    shape (docs counts are filled in when provided).
    """
    kept: list[FilterVerdict] = []
    by_source: dict[str, list[FilterVerdict]] = {}
    for verdict in verdicts:
        tau = resolve_tau(tau_f, verdict.source)
        verdict.tau_f = tau
        verdict.kept = verdict.gain >= tau
        by_source.setdefault(verdict.source, []).append(verdict)
        if verdict.kept:
            kept.append(verdict)
    rows = [
        SourceStats(
            source=source,
            docs=docs.get(source) if docs else None,
            rationales=len(group),
            kept=sum(1 for v in group if v.kept),
            tau_f=resolve_tau(tau_f, source),
        )
        for source, group in sorted(by_source.items())
    ]
    return kept, FilterReport(rows=rows)


@dataclass(frozen=True)
class SourceStats:
    source: str
    docs: int | None
    rationales: int
    kept: int
    tau_f: float

    @property
    def pct_left(self) -> float | None:
        if self.rationales == 0:
            return None
        return round(100.0 * self.kept / self.rationales, 1)


@dataclass
class FilterReport:
    """Per-source extraction/filtration statistics, renderable as the
    #Docs / #Rationales / Rationales Left (%) / tau_f table."""

    rows: list[SourceStats]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "source": row.source,
                    "docs": row.docs,
                    "rationales": row.rationales,
                    "kept": row.kept,
                    "pct_left": row.pct_left,
                    "tau_f": row.tau_f,
                }
                for row in self.rows
            ]
        }

    def render_table(self) -> str:
        headers = ["Source", "#Docs", "#Rationales", "Rationales Left (%)", "tau_f"]
        cells = [
            [
                row.source,
                "-" if row.docs is None else str(row.docs),
                str(row.rationales),
                format_pct(row.pct_left),
                format_tau(row.tau_f),
            ]
            for row in self.rows
        ]
        widths = [max(len(headers[i]), *(len(r[i]) for r in cells)) if cells else len(headers[i]) for i in range(5)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for row_cells in cells:
            lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row_cells)))
        return "\n".join(lines)


def format_pct(pct: float | None) -> str:
    return "-" if pct is None else f"{pct:.1f}"


def format_tau(tau: float) -> str:
    return f"{tau:g}"


def calibrate_threshold(
    labeled_pairs: Sequence[tuple[RationaleCandidate, str]],
    schedule: WeightSchedule,
    gateway: Gateway,
    scorer: BackendRole,
    *,
    target_precision: float = 0.95,
) -> float:
    """Smallest threshold drawn from the observed gains whose kept set reaches
    the target precision; +inf when no threshold attains it.

    Labels are "helpful"/"unhelpful". Calibration needs at least one helpful
    example; an all-helpful set trivially calibrates to the minimum gain.
    """
    gains: list[tuple[float, bool]] = []
    for candidate, label in labeled_pairs:
        if label not in (HELPFUL, UNHELPFUL):
            raise ValueError(f"unknown label {label!r}; expected helpful/unhelpful")
        try:
            verdict = score_candidate(candidate, schedule, gateway, scorer)
        except NonFiniteLoss as exc:
            log.warning("calibrate: dropping candidate %s: %s", candidate.candidate_id, exc)
            continue
        gains.append((verdict.gain, label == HELPFUL))
    return threshold_for_gains(gains, target_precision)


def threshold_for_gains(
    gains: Sequence[tuple[float, bool]], target_precision: float = 0.95
) -> float:
    """Threshold sweep over (gain, is_helpful) pairs; see calibrate_threshold."""
    if not gains or not any(helpful for _, helpful in gains):
        raise InsufficientLabels(
            "calibration needs at least one scoreable helpful example"
        )
    for tau in sorted({gain for gain, _ in gains}):
        kept = [helpful for gain, helpful in gains if gain >= tau]
        if sum(kept) / len(kept) >= target_precision:
            return tau
    return math.inf


# -- JSONL interfaces --


def verdict_to_record(verdict: FilterVerdict) -> dict:
    return {
        "candidate_id": verdict.candidate_id,
        "source": verdict.source,
        "loss_with": verdict.loss_with,
        "loss_without": verdict.loss_without,
        "gain": verdict.gain,
        "kept": verdict.kept,
        "tau_f": verdict.tau_f,
    }


def write_verdicts(path: str | Path, verdicts: Sequence[FilterVerdict]) -> int:
    return write_records(path, (verdict_to_record(v) for v in verdicts))


def load_verdicts(path: str | Path) -> Iterator[FilterVerdict]:
    for lineno, record in read_records(path):
        try:
            yield FilterVerdict(
                candidate_id=str(record["candidate_id"]),
                source=str(record.get("source", "unknown")),
                loss_with=float(record["loss_with"]),
                loss_without=float(record["loss_without"]),
                gain=float(record["gain"]),
                kept=record.get("kept"),
                tau_f=record.get("tau_f"),
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad verdict record: {exc}") from exc
