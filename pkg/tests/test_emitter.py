"""Training-pair emission and filtration statistics."""

from __future__ import annotations

import random

import pytest

from rationalekit.emitter import (
    EmitReport,
    emit,
    load_examples,
    stats,
    truncate_left,
    write_examples,
)
from rationalekit.extraction import Origin, RationaleCandidate


def corpus_candidate(
    preceding: str = "Harry used magic outside school. ",
    rationale: str = "Breaking the rule leads to punishment.",
    following: str = "He is punished to attend a hearing.",
    source_id: str = "pile-7/s0",
    position: int = 1,
) -> RationaleCandidate:
    return RationaleCandidate(
        source_id=source_id,
        position=position,
        preceding=preceding,
        rationale=rationale,
        following=following,
        origin=Origin.CORPUS,
        source="pile",
    )


def qa_candidate() -> RationaleCandidate:
    return RationaleCandidate(
        source_id="demo-math:001",
        position=1,
        preceding="How many? \nStep one happens.\n",
        rationale="Now combine both quantities.",
        following="Step two happens.",
        origin=Origin.QA_DATASET,
        source="demo-math",
    )


def test_emit_uses_preceding_as_context_and_rationale_as_target():
    examples, report = emit([corpus_candidate()])
    assert report == EmitReport(kept_in=1, duplicates=0, emitted=1)
    [example] = examples
    assert example.context == "Harry used magic outside school. "
    assert example.target == "Breaking the rule leads to punishment."
    assert example.origin is Origin.CORPUS
    assert example.source_id == "pile-7/s0"


def test_emit_qa_context_carries_question_and_steps():
    [example], _ = emit([qa_candidate()])[0], None
    assert example.context.startswith("How many?")
    assert "Step one happens." in example.context
    assert "Step two" not in example.context


def test_emit_deduplicates_identical_pairs():
    duplicate = corpus_candidate()
    examples, report = emit([duplicate, corpus_candidate(), qa_candidate()])
    assert report.kept_in == 3
    assert report.duplicates == 1
    assert report.emitted == 2
    assert len(examples) == 2


def test_emit_order_is_deterministic_under_shuffle():
    rng = random.Random(3)
    cands = [
        corpus_candidate(source_id=f"doc-{i}/s0", rationale=f"reason {i}", position=i % 3 + 1)
        for i in range(20)
    ]
    baseline, _ = emit(cands)
    shuffled = list(cands)
    rng.shuffle(shuffled)
    again, _ = emit(shuffled)
    assert baseline == again


def test_emit_count_conservation_is_enforced():
    with pytest.raises(ValueError):
        EmitReport(kept_in=3, duplicates=1, emitted=3)


def test_emit_truncates_context_from_the_left():
    candidate = corpus_candidate(preceding="w1 w2 w3 w4 w5 tail text. ")
    [example], _ = emit([candidate], max_context_words=3)
    assert example.context == "w5 tail text. "


def test_truncate_left_keeps_short_text_untouched():
    assert truncate_left("a b c", 10) == "a b c"


def test_examples_round_trip_through_jsonl(tmp_path):
    examples, _ = emit([corpus_candidate(), qa_candidate()])
    path = tmp_path / "train.jsonl"
    write_examples(path, examples)
    assert list(load_examples(path)) == examples


# -- statistics table --


def test_stats_reproduces_percent_left_arithmetic():
    report = stats(
        candidates_before={"GSM8K": 17566, "ECQA": 19669},
        candidates_after={"GSM8K": 3425, "ECQA": 11329},
        docs={"GSM8K": 7473, "ECQA": 7600},
        tau_f={"GSM8K": 1.2, "ECQA": 0.5},
    )
    rows = {row.source: row for row in report.rows}
    assert rows["GSM8K"].pct_left == 19.5
    assert rows["ECQA"].pct_left == 57.6
    assert rows["GSM8K"].docs == 7473
    table = report.render_table()
    assert "19.5" in table and "57.6" in table
    assert "1.2" in table and "0.5" in table


def test_stats_guards_zero_before_count():
    report = stats(candidates_before={"empty": 0}, candidates_after={}, docs={"empty": 4})
    [row] = report.rows
    assert row.pct_left is None
    assert "-" in report.render_table()


def test_stats_to_dict_shape():
    report = stats(
        candidates_before={"web": 10},
        candidates_after={"web": 4},
        docs={"web": 2},
        tau_f=0.0,
    )
    assert report.to_dict() == {
        "rows": [
            {
                "source": "web",
                "docs": 2,
                "rationales": 10,
                "kept": 4,
                "pct_left": 40.0,
                "tau_f": 0.0,
            }
        ]
    }
