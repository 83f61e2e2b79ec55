"""Subcommand front-end for the pipeline stages.

Exit codes: 0 success, 1 validation/config error, 2 runtime error. Progress
goes to stderr; artifacts go to the configured paths.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import sys
from pathlib import Path

import click

from . import emitter, evaluation, extraction, filtering, supervision
from .backends import Role
from .config import RunConfig
from .errors import ConfigInvalid, JsonlError, KitError
from .jsonl import read_records, write_json
from .prefilter import PrefilterConfig, centroid, load_documents, write_kept
from .prefilter import prefilter as prefilter_documents

log = logging.getLogger(__name__)


def _load_config(path: str | None) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _resolve_template(name_or_path: str) -> extraction.PromptTemplate:
    if Path(name_or_path).exists():
        return extraction.template_from_file(name_or_path)
    return extraction.load_template(name_or_path)


config_option = click.option("--config", "config_path", type=str, default=None, help="Run config JSON.")
jobs_option = click.option("--jobs", type=int, default=None, help="Worker threads (overrides config).")


@click.group()
def cli() -> None:
    """Extract, filter, and emit implicit rationales; supervise reasoning."""


@cli.command("prefilter")
@config_option
@click.option("--in", "corpus_path", required=True, type=str, help="Corpus JSONL {id, text, source}.")
@click.option("--reference", "reference_path", required=True, type=str, help="Reference texts JSONL.")
@click.option("--out", "out_path", required=True, type=str, help="Kept documents JSONL.")
@click.option("--report", "report_path", type=str, default=None, help="Per-source report JSON.")
@click.option("--alpha", type=float, default=None, help="Cosine threshold (overrides config).")
@click.option("--max-tokens", type=int, default=None, help="Document token cap (overrides config).")
@jobs_option
def prefilter_command(config_path, corpus_path, reference_path, out_path, report_path, alpha, max_tokens, jobs):
    """Keep documents similar to the reference reasoning centroid."""
    config = _load_config(config_path)
    gateway = config.gateway()
    embedder = config.role_binding(Role.EMBEDDER)
    scorer = config.role_binding(Role.SCORER)
    reference_texts = _load_reference_texts(reference_path)
    center = centroid(reference_texts, gateway, embedder)
    params = PrefilterConfig(
        centroid=center,
        alpha=alpha if alpha is not None else config.prefilter.alpha,
        max_tokens=max_tokens if max_tokens is not None else config.prefilter.max_tokens,
    )
    docs = load_documents(corpus_path, gateway=gateway, scorer_role=scorer)
    kept, report = prefilter_documents(
        docs, params, gateway, embedder, jobs=jobs or config.jobs
    )
    count = write_kept(out_path, kept)
    if report_path:
        write_json(report_path, report.to_dict())
    click.echo(f"prefilter: kept {count} document(s) -> {out_path}", err=True)


def _load_reference_texts(path: str) -> list[str]:
    texts: list[str] = []
    for lineno, record in read_records(path):
        if "text" in record:
            texts.append(str(record["text"]))
        elif "question" in record and "answer" in record:
            texts.append(f"{record['question']}\n{record['answer']}")
        else:
            raise JsonlError(
                f"{path}: line {lineno}: expected 'text' or 'question'+'answer'"
            )
    return texts


@cli.command("extract")
@config_option
@click.option("--mode", type=click.Choice(["corpus", "qa"]), required=True)
@click.option("--in", "in_path", required=True, type=str)
@click.option("--out", "out_path", required=True, type=str, help="Candidates JSONL.")
@click.option("--template", "template_name", type=str, default=None, help="Packaged template name or file path.")
@click.option("--report", "report_path", type=str, default=None, help="Span-count report JSON.")
def extract_command(config_path, mode, in_path, out_path, template_name, report_path):
    """Prompt the extractor model and parse rationale candidates."""
    config = _load_config(config_path)
    gateway = config.gateway()
    extractor = config.role_binding(Role.EXTRACTOR)
    params = config.extraction
    counts = extraction.ExtractionCounts()
    candidates: list[extraction.RationaleCandidate] = []
    if mode == "corpus":
        template = _resolve_template(template_name or "extract_corpus")
        scorer = config.role_binding(Role.SCORER)
        for doc in load_documents(in_path, gateway=gateway, scorer_role=scorer):
            for seg in extraction.segment(doc, params.max_segment_words):
                found, sub = extraction.extract_from_corpus(
                    seg,
                    template,
                    gateway,
                    extractor,
                    source=doc.source,
                    num_samples=params.num_samples,
                    temperature=params.temperature,
                    top_k=params.top_k,
                    max_tokens=params.max_tokens,
                    seed=config.seed,
                )
                candidates.extend(found)
                counts.merge(sub)
    else:
        template = _resolve_template(template_name or "extract_qa_math")
        for pair in extraction.load_qa_pairs(in_path):
            found, sub = extraction.extract_from_qa(
                pair,
                template,
                gateway,
                extractor,
                num_samples=params.num_samples,
                temperature=params.temperature,
                top_k=params.top_k,
                max_tokens=params.max_tokens,
                seed=config.seed,
            )
            candidates.extend(found)
            counts.merge(sub)
    candidates = sorted(candidates, key=lambda c: (c.source_id, c.position, c.rationale))
    extraction.write_candidates(out_path, candidates)
    if report_path:
        write_json(
            report_path,
            {
                "kept": counts.kept,
                "malformed": counts.malformed,
                "leaked": counts.leaked,
                "total": counts.total,
            },
        )
    click.echo(
        f"extract: kept {counts.kept}, malformed {counts.malformed}, "
        f"leaked {counts.leaked} -> {out_path}",
        err=True,
    )


@cli.command("filter")
@config_option
@click.option("--in", "in_path", required=True, type=str, help="Candidates JSONL.")
@click.option("--out", "out_path", required=True, type=str, help="Verdicts JSONL.")
@click.option("--kept", "kept_path", type=str, default=None, help="Kept candidates JSONL (emit input).")
@click.option("--tau-f", "tau_override", type=float, default=None, help="Threshold for all sources.")
@click.option("--report", "report_path", type=str, default=None, help="Statistics report JSON.")
@jobs_option
def filter_command(config_path, in_path, out_path, kept_path, tau_override, report_path, jobs):
    """Score candidates by future-token loss gain and apply the threshold."""
    config = _load_config(config_path)
    gateway = config.gateway()
    scorer = config.role_binding(Role.SCORER)
    candidates = list(extraction.load_candidates(in_path))
    verdicts, dropped = filtering.score_candidates(
        candidates, config.weights, gateway, scorer, jobs=jobs or config.jobs
    )
    tau = tau_override if tau_override is not None else config.tau_f
    kept, report = filtering.filter_verdicts(verdicts, tau)
    filtering.write_verdicts(out_path, verdicts)
    if kept_path:
        kept_ids = {v.candidate_id for v in kept}
        by_id: dict[str, extraction.RationaleCandidate] = {}
        for candidate in candidates:
            by_id.setdefault(candidate.candidate_id, candidate)
        extraction.write_candidates(
            kept_path, [by_id[v.candidate_id] for v in kept if v.candidate_id in by_id]
        )
    if report_path:
        write_json(report_path, report.to_dict())
    click.echo(report.render_table())
    click.echo(
        f"filter: kept {len(kept)} of {len(verdicts)} scored "
        f"({dropped} invalid) -> {out_path}",
        err=True,
    )


@cli.command("calibrate")
@config_option
@click.option("--labeled", "labeled_path", required=True, type=str, help="Labeled candidates JSONL.")
@click.option("--target-precision", type=float, default=0.95, show_default=True)
@click.option("--out", "out_path", type=str, default=None, help="Result JSON.")
def calibrate_command(config_path, labeled_path, target_precision, out_path):
    """Pick the smallest threshold meeting the target precision on labels."""
    config = _load_config(config_path)
    gateway = config.gateway()
    scorer = config.role_binding(Role.SCORER)
    pairs = _load_labeled(labeled_path)
    tau = filtering.calibrate_threshold(
        pairs, config.weights, gateway, scorer, target_precision=target_precision
    )
    attainable = math.isfinite(tau)
    if out_path:
        write_json(
            out_path,
            {
                "tau_f": tau if attainable else None,
                "attainable": attainable,
                "target_precision": target_precision,
                "n_labeled": len(pairs),
            },
        )
    click.echo(f"tau_f = {tau if attainable else 'unattainable (+inf)'}")


def _load_labeled(path: str) -> list[tuple[extraction.RationaleCandidate, str]]:
    pairs: list[tuple[extraction.RationaleCandidate, str]] = []
    for lineno, record in read_records(path):
        try:
            label = str(record["label"])
            candidate = extraction.RationaleCandidate(
                source_id=str(record["source_id"]),
                position=int(record["position"]),
                preceding=str(record["preceding"]),
                rationale=str(record["rationale"]),
                following=str(record["following"]),
                origin=extraction.Origin(record.get("origin", "corpus")),
                source=str(record.get("source", "unknown")),
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad labeled record: {exc}") from exc
        pairs.append((candidate, label))
    return pairs


@cli.command("emit")
@config_option
@click.option("--in", "in_path", required=True, type=str, help="Kept candidates JSONL.")
@click.option("--out", "out_path", required=True, type=str, help="Training examples JSONL.")
@click.option("--report", "report_path", type=str, default=None)
@click.option("--max-context-words", type=int, default=None, help="Left-truncate contexts (overrides config).")
def emit_command(config_path, in_path, out_path, report_path, max_context_words):
    """Convert kept candidates into (context -> rationale) training pairs."""
    config = _load_config(config_path)
    limit = max_context_words if max_context_words is not None else config.emit.max_context_words
    kept = list(extraction.load_candidates(in_path))
    examples, report = emitter.emit(kept, max_context_words=limit)
    emitter.write_examples(out_path, examples)
    if report_path:
        write_json(
            report_path,
            {"kept_in": report.kept_in, "duplicates": report.duplicates, "emitted": report.emitted},
        )
    click.echo(
        f"emit: {report.emitted} example(s) ({report.duplicates} duplicate(s)) -> {out_path}",
        err=True,
    )


@cli.command("supervise")
@config_option
@click.option("--question", type=str, default=None, help="Single question to answer.")
@click.option("--tasks", "tasks_path", type=str, default=None, help="Task JSONL to answer.")
@click.option("--mode", type=click.Choice(["implicit", "explicit"]), default=None)
@click.option("--trace-dir", type=str, default=None, help="Directory for per-question trace JSON.")
@click.option("--seed", type=int, default=None)
def supervise_command(config_path, question, tasks_path, mode, trace_dir, seed):
    """Answer questions with rationale-supervised step-wise reasoning."""
    if (question is None) == (tasks_path is None):
        raise click.UsageError("provide exactly one of --question or --tasks")
    config = _load_config(config_path)
    sup = config.supervision
    if mode is not None:
        sup = dataclasses.replace(sup, mode=supervision.SupervisionMode(mode))
    click.echo(
        f"supervise: mode={sup.mode.value} temperature={sup.temperature} "
        f"num_candidates={sup.num_candidates} top_k={sup.top_k} "
        f"max_steps={sup.max_steps} stop_pattern={sup.stop_pattern!r}",
        err=True,
    )
    gateway = config.gateway()
    roles = config.bindings()
    run_seed = seed if seed is not None else config.seed
    if question is not None:
        items = [("question-0", question)]
    else:
        items = [(t.id, t.prompt_question()) for t in evaluation.load_tasks(tasks_path)]
    if trace_dir:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    for name, text in items:
        result = supervision.run(text, sup, roles, gateway, seed=run_seed)
        if trace_dir:
            write_json(Path(trace_dir) / f"{name}.json", result.to_dict())
        rendered = result.trajectory.render()
        click.echo(rendered)
        click.echo("")


@cli.command("eval")
@config_option
@click.option("--tasks", "tasks_path", required=True, type=str)
@click.option("--out", "out_path", type=str, default=None, help="Results JSON.")
@click.option("--records", "records_path", type=str, default=None, help="Per-instance JSONL.")
@click.option("--seed", type=int, default=None)
def eval_command(config_path, tasks_path, out_path, records_path, seed):
    """Exact-match accuracy of baseline vs supervised arms."""
    config = _load_config(config_path)
    gateway = config.gateway()
    roles = config.bindings()
    tasks = list(evaluation.load_tasks(tasks_path))
    results, records = evaluation.evaluate_by_tag(
        tasks, config.supervision, roles, gateway, seed=seed if seed is not None else config.seed
    )
    if out_path:
        write_json(out_path, {"results": [evaluation.result_to_dict(r) for r in results]})
    if records_path:
        evaluation.write_instance_records(records_path, records)
    click.echo(evaluation.render_results(results))


@cli.command("stats")
@click.option("--candidates", "candidates_path", required=True, type=str, help="All candidates JSONL.")
@click.option("--verdicts", "verdicts_path", required=True, type=str, help="Filtered verdicts JSONL.")
@click.option("--out", "out_path", type=str, default=None, help="Report JSON.")
def stats_command(candidates_path, verdicts_path, out_path):
    """Per-source extraction and filtration statistics table."""
    before: dict[str, int] = {}
    docs: dict[str, set[str]] = {}
    for candidate in extraction.load_candidates(candidates_path):
        before[candidate.source] = before.get(candidate.source, 0) + 1
        docs.setdefault(candidate.source, set()).add(candidate.source_id.split("/s")[0])
    after: dict[str, int] = {}
    tau_by_source: dict[str, float] = {}
    for verdict in filtering.load_verdicts(verdicts_path):
        if verdict.kept:
            after[verdict.source] = after.get(verdict.source, 0) + 1
        if verdict.tau_f is not None:
            tau_by_source.setdefault(verdict.source, verdict.tau_f)
    report = emitter.stats(
        before,
        after,
        {source: len(ids) for source, ids in docs.items()},
        tau_by_source or 0.0,
    )
    if out_path:
        write_json(out_path, report.to_dict())
    click.echo(report.render_table())


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    logging.basicConfig(
        level=logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 2
    except (ConfigInvalid, JsonlError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except KitError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
