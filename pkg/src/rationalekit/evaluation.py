"""Run baseline and supervised arms over task files and report accuracy deltas."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .backends import Gateway
from .errors import JsonlError, NoAnswerFound
from .jsonl import read_records, write_records
from .supervision import (
    STOP_REASON_PATTERN,
    RoleBindings,
    RunResult,
    SupervisionConfig,
    Trajectory,
    run,
    run_baseline,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskInstance:
    id: str
    question: str
    gold: str
    task_tag: str = "task"
    shots: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.gold:
            raise ValueError("gold answer must be non-empty")

    def prompt_question(self) -> str:
        return "\n\n".join([*self.shots, self.question])


@dataclass(frozen=True)
class EvalResult:
    task_tag: str
    baseline_acc: float
    supervised_acc: float
    delta: float
    n: int


@dataclass(frozen=True)
class InstanceRecord:
    id: str
    gold: str
    baseline_answer: str | None
    supervised_answer: str | None
    baseline_correct: bool
    supervised_correct: bool


def normalize_answer(text: str) -> str:
    """Exact-match normalization: trim, drop thousands commas and one
    trailing period."""
    out = text.strip().replace(",", "")
    if out.endswith("."):
        out = out[:-1]
    return out.strip()


def extract_answer(trajectory: Trajectory, stop_pattern: str) -> str:
    """Normalized text after the stop pattern in the last step that fired it."""
    if not trajectory.terminated:
        raise ValueError("trajectory must be terminated before answer extraction")
    if trajectory.termination_reason != STOP_REASON_PATTERN:
        raise NoAnswerFound(f"trajectory ended by {trajectory.termination_reason}")
    for step in reversed(trajectory.steps):
        position = step.rfind(stop_pattern)
        if position != -1:
            tail = step[position + len(stop_pattern) :].splitlines()
            answer = normalize_answer(tail[0] if tail else "")
            if answer:
                return answer
            break
    raise NoAnswerFound("no text follows the stop pattern")


def evaluate(
    tasks: Sequence[TaskInstance],
    config: SupervisionConfig,
    roles: RoleBindings,
    gateway: Gateway,
    *,
    seed: int = 0,
) -> tuple[EvalResult, list[InstanceRecord]]:
    """Both arms on identical instances with identical per-instance seeds.

    Per-instance failures are logged and scored incorrect; the suite always
    finishes. Accuracy is exact match after normalization.
    """
    if not tasks:
        raise ValueError("evaluate needs at least one task")
    records: list[InstanceRecord] = []
    for index, task in enumerate(tasks):
        instance_seed = seed + index
        question = task.prompt_question()
        baseline_answer = _arm_answer(
            run_baseline, question, config, roles, gateway, instance_seed, task.id, "baseline"
        )
        supervised_answer = _arm_answer(
            run, question, config, roles, gateway, instance_seed, task.id, "supervised"
        )
        gold = normalize_answer(task.gold)
        records.append(
            InstanceRecord(
                id=task.id,
                gold=gold,
                baseline_answer=baseline_answer,
                supervised_answer=supervised_answer,
                baseline_correct=baseline_answer == gold,
                supervised_correct=supervised_answer == gold,
            )
        )
    n = len(records)
    baseline_acc = sum(r.baseline_correct for r in records) / n
    supervised_acc = sum(r.supervised_correct for r in records) / n
    tags = {task.task_tag for task in tasks}
    result = EvalResult(
        task_tag=tags.pop() if len(tags) == 1 else "mixed",
        baseline_acc=baseline_acc,
        supervised_acc=supervised_acc,
        delta=supervised_acc - baseline_acc,
        n=n,
    )
    return result, records


def evaluate_by_tag(
    tasks: Sequence[TaskInstance],
    config: SupervisionConfig,
    roles: RoleBindings,
    gateway: Gateway,
    *,
    seed: int = 0,
) -> tuple[list[EvalResult], list[InstanceRecord]]:
    """One EvalResult per task_tag, instances kept in file order within a tag."""
    groups: dict[str, list[TaskInstance]] = {}
    for task in tasks:
        groups.setdefault(task.task_tag, []).append(task)
    results: list[EvalResult] = []
    records: list[InstanceRecord] = []
    for tag in sorted(groups):
        result, group_records = evaluate(groups[tag], config, roles, gateway, seed=seed)
        results.append(result)
        records.extend(group_records)
    return results, records


def _arm_answer(
    runner,
    question: str,
    config: SupervisionConfig,
    roles: RoleBindings,
    gateway: Gateway,
    seed: int,
    task_id: str,
    arm: str,
) -> str | None:
    try:
        result: RunResult = runner(question, config, roles, gateway, seed=seed)
        return extract_answer(result.trajectory, config.stop_pattern)
    except NoAnswerFound as exc:
        log.info("eval: %s arm of %s produced no answer: %s", arm, task_id, exc)
        return None
    except Exception as exc:  # contract: the harness never aborts mid-suite
        log.warning("eval: %s arm of %s failed: %s", arm, task_id, exc)
        return None


def render_results(results: Sequence[EvalResult]) -> str:
    headers = ["Task", "N", "Baseline", "Supervised", "Delta"]
    cells = [
        [
            r.task_tag,
            str(r.n),
            f"{100 * r.baseline_acc:.1f}",
            f"{100 * r.supervised_acc:.1f}",
            f"{100 * r.delta:+.1f}",
        ]
        for r in results
    ]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.extend("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)) for row in cells)
    return "\n".join(lines)


# -- JSONL interfaces --


def load_tasks(path: str | Path) -> Iterator[TaskInstance]:
    for lineno, record in read_records(path):
        try:
            yield TaskInstance(
                id=str(record["id"]),
                question=str(record["question"]),
                gold=str(record["gold"]),
                task_tag=str(record.get("task_tag", "task")),
                shots=tuple(record.get("shots", ())),
            )
        except (KeyError, ValueError) as exc:
            raise JsonlError(f"{path}: line {lineno}: bad task record: {exc}") from exc


def result_to_dict(result: EvalResult) -> dict:
    return {
        "task_tag": result.task_tag,
        "baseline_acc": result.baseline_acc,
        "supervised_acc": result.supervised_acc,
        "delta": result.delta,
        "n": result.n,
    }


def write_instance_records(path: str | Path, records: Sequence[InstanceRecord]) -> int:
    return write_records(
        path,
        (
            {
                "id": r.id,
                "gold": r.gold,
                "baseline_answer": r.baseline_answer,
                "supervised_answer": r.supervised_answer,
                "baseline_correct": r.baseline_correct,
                "supervised_correct": r.supervised_correct,
            }
            for r in records
        ),
    )
