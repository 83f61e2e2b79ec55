"""Run configuration validation and the CLI subcommand surface."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from rationalekit.cli import main
from rationalekit.config import RunConfig
from rationalekit.errors import ConfigInvalid
from rationalekit.jsonl import read_records

from worlds import pipeline_world


# -- config --


def test_default_config_round_trips():
    config = RunConfig()
    assert RunConfig.from_dict(config.to_dict()) == config


def test_full_config_round_trips():
    raw = {
        "roles": {"agent": {"endpoint": "mock://x.json", "model": "m"}},
        "prefilter": {"alpha": 0.25, "max_tokens": 1500},
        "weights": {"decay": 0.8, "horizon": 32},
        "tau_f": {"default": 0.1, "GSM8K": 1.2},
        "supervision": {"mode": "explicit", "num_candidates": 5},
        "extraction": {"temperature": 0.2},
        "emit": {"max_context_words": 64},
        "jobs": 2,
        "seed": 9,
    }
    config = RunConfig.from_dict(raw)
    assert RunConfig.from_dict(config.to_dict()) == config
    assert config.supervision.num_candidates == 5
    assert config.tau_f["GSM8K"] == 1.2


@pytest.mark.parametrize(
    "raw, fragment",
    [
        ({"bogus": 1}, "config.bogus"),
        ({"prefilter": {"alpah": 0.3}}, "config.prefilter.alpah"),
        ({"roles": {"pilot": {"endpoint": "e", "model": "m"}}}, "config.roles.pilot"),
        ({"supervision": {"mode": "psychic"}}, "config.supervision.mode"),
        ({"weights": {"decay": "fast"}}, "config.weights.decay"),
        ({"jobs": 0}, "config.jobs"),
    ],
)
def test_invalid_configs_name_the_offending_key(raw, fragment):
    with pytest.raises(ConfigInvalid) as excinfo:
        RunConfig.from_dict(raw)
    assert fragment in str(excinfo.value)


def test_scalar_tau_becomes_default_mapping():
    config = RunConfig.from_dict({"tau_f": 1.5})
    assert config.tau_f == {"default": 1.5}


def test_unbound_role_raises():
    from rationalekit.backends import Role

    with pytest.raises(ConfigInvalid):
        RunConfig().role_binding(Role.AGENT)


# -- CLI plumbing --


def test_unknown_flag_exits_1(capsys):
    assert main(["filter", "--bogus"]) == 1
    assert "Usage" in capsys.readouterr().err


def test_missing_subcommand_shows_usage(capsys):
    code = main([])
    captured = capsys.readouterr()
    assert code in (0, 1)
    assert "Usage" in captured.err or "Usage" in captured.out


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "supervise" in capsys.readouterr().out


def test_supervise_requires_exactly_one_input(capsys):
    assert main(["supervise"]) == 1


def test_invalid_config_file_exits_1(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text('{"bogus": true}', encoding="utf-8")
    code = main(["supervise", "--config", str(config), "--question", "Q?"])
    assert code == 1
    assert "config.bogus" in capsys.readouterr().err


def test_runtime_backend_failure_exits_2(tmp_path, monkeypatch, capsys):
    paths = pipeline_world(tmp_path)
    monkeypatch.chdir(tmp_path)
    code = main(["supervise", "--config", "config.json", "--question", "Totally unscripted?"])
    assert code == 2


# -- CLI pipeline stages on the scripted world --


@pytest.fixture()
def world_dir(tmp_path, monkeypatch):
    pipeline_world(tmp_path)
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_prefilter_command_writes_kept_docs_and_report(world_dir, capsys):
    code = main(
        [
            "prefilter",
            "--config", "config.json",
            "--in", "corpus.jsonl",
            "--reference", "reference.jsonl",
            "--out", "kept_docs.jsonl",
            "--report", "prefilter_report.json",
        ]
    )
    assert code == 0
    kept_ids = {record["id"] for _, record in read_records(world_dir / "kept_docs.jsonl")}
    assert kept_ids == {"web-001", "web-002", "forum-001", "forum-003"}
    report = json.loads((world_dir / "prefilter_report.json").read_text())
    assert report["web"]["seen"] == 3
    assert report["web"]["kept"] == 2
    assert report["forum"]["kept"] == 2


def test_filter_command_prints_tau_and_writes_verdicts(world_dir, capsys):
    assert main(
        [
            "prefilter",
            "--config", "config.json",
            "--in", "corpus.jsonl",
            "--reference", "reference.jsonl",
            "--out", "kept_docs.jsonl",
        ]
    ) == 0
    assert main(
        [
            "extract",
            "--config", "config.json",
            "--mode", "qa",
            "--in", "qa.jsonl",
            "--out", "qa_cands.jsonl",
            "--report", "qa_counts.json",
        ]
    ) == 0
    counts = json.loads((world_dir / "qa_counts.json").read_text())
    assert counts["leaked"] == 1  # one planted leak in the demo QA world
    assert counts["kept"] == 2
    capsys.readouterr()
    code = main(
        [
            "filter",
            "--config", "config.json",
            "--in", "qa_cands.jsonl",
            "--out", "verdicts.jsonl",
            "--kept", "kept_cands.jsonl",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "tau_f" in out and "1.2" in out
    verdicts = [record for _, record in read_records(world_dir / "verdicts.jsonl")]
    assert all(v["tau_f"] == 1.2 for v in verdicts)
    assert all(v["gain"] == v["loss_without"] - v["loss_with"] for v in verdicts)
    kept = [record for _, record in read_records(world_dir / "kept_cands.jsonl")]
    assert 0 < len(kept) <= len(verdicts)


def test_supervise_echoes_run_header_with_paper_defaults(world_dir, capsys):
    question = "Question 0: what is 0 plus 1?"
    code = main(["supervise", "--config", "config.json", "--mode", "implicit", "--question", question])
    assert code == 0
    captured = capsys.readouterr()
    assert "mode=implicit" in captured.err
    assert "temperature=0.7" in captured.err
    assert "num_candidates=3" in captured.err
    assert "top_k=3" in captured.err
    assert "The final answer is: 1" in captured.out


def test_effective_config_round_trip_reproduces_behavior(world_dir, capsys):
    config = RunConfig.from_file("config.json")
    rewritten = Path("config_roundtrip.json")
    rewritten.write_text(json.dumps(config.to_dict()), encoding="utf-8")
    assert RunConfig.from_file(rewritten) == config
    question = "Question 1: what is 1 plus 2?"
    assert main(["supervise", "--config", "config.json", "--question", question]) == 0
    first = capsys.readouterr().out
    assert main(["supervise", "--config", str(rewritten), "--question", question]) == 0
    second = capsys.readouterr().out
    assert first == second


def test_eval_command_reports_positive_delta(world_dir, capsys):
    code = main(
        [
            "eval",
            "--config", "config.json",
            "--tasks", "tasks.jsonl",
            "--out", "results.json",
            "--records", "records.jsonl",
        ]
    )
    assert code == 0
    results = json.loads((world_dir / "results.json").read_text())
    [row] = results["results"]
    assert row["delta"] == pytest.approx(0.25)
    assert row["n"] == 4
    records = [record for _, record in read_records(world_dir / "records.jsonl")]
    assert len(records) == 4


def test_calibrate_command_reports_threshold(world_dir, capsys):
    code = main(
        [
            "calibrate",
            "--config", "config.json",
            "--labeled", "labeled.jsonl",
            "--out", "calibration.json",
        ]
    )
    assert code == 0
    result = json.loads((world_dir / "calibration.json").read_text())
    assert result["attainable"] is True
    assert result["tau_f"] > 0
