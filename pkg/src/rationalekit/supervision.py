"""Step-wise reasoning loop supervised by generated rationales.

Each iteration: generate one rationale for the trajectory so far, sample N
candidate next steps from the agent, score every candidate by its token
probability given trajectory and rationale, and extend the trajectory with
the argmax. Under implicit supervision the agent never sees the rationale
(it only steers scoring); under explicit supervision the rationale is
appended to the agent's context for this iteration only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .backends import BackendRole, Gateway, GenerationRequest
from .errors import EmptyRationale, NoCandidates, NonFiniteScore
from .filtering import join_context

log = logging.getLogger(__name__)

DEFAULT_STOP_PATTERN = "The final answer is:"

STOP_REASON_PATTERN = "stop_pattern"
STOP_REASON_MAX_STEPS = "max_steps_exceeded"


class SupervisionMode(str, Enum):
    IMPLICIT = "implicit"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SupervisionConfig:
    mode: SupervisionMode = SupervisionMode.IMPLICIT
    num_candidates: int = 3
    temperature: float = 0.7
    top_k: int = 3
    max_steps: int = 20
    stop_pattern: str = DEFAULT_STOP_PATTERN
    max_step_tokens: int = 256
    max_rationale_tokens: int = 128

    def __post_init__(self) -> None:
        if self.num_candidates < 1:
            raise ValueError("num_candidates must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class RoleBindings:
    """The backends one run talks to; roles may share an endpoint."""

    rationale_generator: BackendRole
    agent: BackendRole
    scorer: BackendRole
    extractor: BackendRole | None = None
    embedder: BackendRole | None = None


@dataclass
class Trajectory:
    question: str
    steps: list[str] = field(default_factory=list)
    terminated: bool = False
    termination_reason: str | None = None

    def render(self) -> str:
        return "\n".join([self.question, *self.steps])

    def append(self, step: str) -> None:
        if self.terminated:
            raise ValueError("cannot extend a terminated trajectory")
        self.steps.append(step)


@dataclass(frozen=True)
class ScoredStep:
    text: str
    heuristic: float | None
    rank_index: int


@dataclass(frozen=True)
class IterationTrace:
    rationale: str | None
    candidates: tuple[ScoredStep, ...]
    chosen_index: int
    fallback: bool = False


@dataclass
class RunResult:
    trajectory: Trajectory
    iterations: list[IterationTrace]

    def to_dict(self) -> dict:
        return {
            "question": self.trajectory.question,
            "iterations": [
                {
                    "rationale": it.rationale,
                    "candidates": [{"text": s.text, "h": s.heuristic} for s in it.candidates],
                    "chosen_index": it.chosen_index,
                    "fallback": it.fallback,
                }
                for it in self.iterations
            ],
            "final_steps": list(self.trajectory.steps),
            "terminated_reason": self.trajectory.termination_reason,
        }


def generate_rationale(
    trajectory: Trajectory,
    gateway: Gateway,
    role: BackendRole,
    config: SupervisionConfig,
    *,
    seed: int | None = None,
) -> str:
    """One rationale sampled from the rationale generator on the rendered
    trajectory. Raises EmptyRationale so the caller can fall back to an
    unsupervised step for this iteration."""
    if trajectory.terminated:
        raise ValueError("trajectory is already terminated")
    completions = gateway.generate(
        GenerationRequest(
            prompt=trajectory.render(),
            num_samples=1,
            temperature=config.temperature,
            top_k=config.top_k,
            max_tokens=config.max_rationale_tokens,
            stop_strings=("\n",),
            seed=seed,
        ),
        role,
    )
    rationale = completions[0].strip()
    if not rationale:
        raise EmptyRationale("rationale generator returned an empty completion")
    return rationale


def propose_steps(
    trajectory: Trajectory,
    rationale: str,
    mode: SupervisionMode,
    gateway: Gateway,
    agent: BackendRole,
    config: SupervisionConfig,
    *,
    seed: int | None = None,
) -> list[str]:
    """Sample candidate next steps, one line each.

    Implicit mode conditions the agent on the trajectory alone; explicit mode
    appends the rationale as an auxiliary line for this call only.
    """
    prompt = trajectory.render()
    if mode is SupervisionMode.EXPLICIT:
        prompt = prompt + "\n" + rationale
    completions = gateway.generate(
        GenerationRequest(
            prompt=prompt,
            num_samples=config.num_candidates,
            temperature=config.temperature,
            top_k=config.top_k,
            max_tokens=config.max_step_tokens,
            stop_strings=("\n",),
            seed=seed,
        ),
        agent,
    )
    steps = [text.strip() for text in completions if text.strip()]
    if not steps:
        raise NoCandidates("every sampled next step was empty")
    return steps


def heuristic(
    trajectory: Trajectory,
    rationale: str,
    step: str,
    mode: SupervisionMode,
    gateway: Gateway,
    scorer: BackendRole,
    agent: BackendRole,
) -> float:
    """Mean per-token logprob of the step given trajectory and rationale.

    Implicit mode scores with the probability-estimation backend, explicit
    mode with the agent itself. Length normalization keeps the heuristic from
    favoring short steps.
    """
    if not step.strip():
        raise ValueError("step must be non-empty")
    role = scorer if mode is SupervisionMode.IMPLICIT else agent
    prefix = join_context(trajectory.render(), rationale) + "\n"
    scores = gateway.score_continuation(prefix, step, role)
    if not scores:
        raise NonFiniteScore("backend returned no tokens for the step")
    value = math.fsum(s.logprob for s in scores) / len(scores)
    if not math.isfinite(value):
        raise NonFiniteScore(f"non-finite heuristic for step {step[:40]!r}")
    return value


def rank_order(heuristics: Sequence[float]) -> list[int]:
    """Rank index per candidate after a descending sort; ties keep generation
    order. Any strictly increasing transform of the heuristics yields the
    same ranking."""
    order = sorted(range(len(heuristics)), key=lambda i: (-heuristics[i], i))
    ranks = [0] * len(order)
    for rank, position in enumerate(order):
        ranks[position] = rank
    return ranks


def select_best(heuristics: Sequence[float]) -> int:
    """Index of the highest heuristic; first-generated wins ties."""
    if not heuristics:
        raise NoCandidates("nothing to select from")
    return rank_order(heuristics).index(0)


def run(
    question: str,
    config: SupervisionConfig,
    roles: RoleBindings,
    gateway: Gateway,
    *,
    seed: int | None = None,
) -> RunResult:
    """Supervised reasoning loop: rationale, propose, score, argmax, extend.

    Stops when the stop pattern appears in the accepted step; hitting
    max_steps terminates with a diagnostic rather than raising. A failed
    rationale degrades this iteration to one unsupervised greedy step.
    """
    trajectory = Trajectory(question=question)
    iterations: list[IterationTrace] = []
    for _ in range(config.max_steps):
        try:
            rationale = generate_rationale(
                trajectory, gateway, roles.rationale_generator, config, seed=seed
            )
        except EmptyRationale as exc:
            log.warning("supervise: %s; taking one unsupervised greedy step", exc)
            step = _greedy_step(trajectory, gateway, roles.agent, config, seed=seed)
            iterations.append(
                IterationTrace(
                    rationale=None,
                    candidates=(ScoredStep(text=step, heuristic=None, rank_index=0),),
                    chosen_index=0,
                    fallback=True,
                )
            )
            if _advance(trajectory, step, config):
                break
            continue
        candidates = propose_steps(
            trajectory, rationale, config.mode, gateway, roles.agent, config, seed=seed
        )
        values: list[float] = []
        survivors: list[str] = []
        for candidate in candidates:
            try:
                values.append(
                    heuristic(
                        trajectory,
                        rationale,
                        candidate,
                        config.mode,
                        gateway,
                        roles.scorer,
                        roles.agent,
                    )
                )
                survivors.append(candidate)
            except NonFiniteScore as exc:
                log.warning("supervise: dropping candidate: %s", exc)
        if not survivors:
            raise NoCandidates("no candidate step survived scoring")
        ranks = rank_order(values)
        chosen = ranks.index(0)
        iterations.append(
            IterationTrace(
                rationale=rationale,
                candidates=tuple(
                    ScoredStep(text=s, heuristic=h, rank_index=r)
                    for s, h, r in zip(survivors, values, ranks)
                ),
                chosen_index=chosen,
            )
        )
        if _advance(trajectory, survivors[chosen], config):
            break
    else:
        trajectory.terminated = True
        trajectory.termination_reason = STOP_REASON_MAX_STEPS
        log.warning(
            "supervise: no stop pattern within %d steps for question %r",
            config.max_steps,
            question[:60],
        )
    if not trajectory.terminated:
        trajectory.terminated = True
        trajectory.termination_reason = STOP_REASON_PATTERN
    return RunResult(trajectory=trajectory, iterations=iterations)


def run_baseline(
    question: str,
    config: SupervisionConfig,
    roles: RoleBindings,
    gateway: Gateway,
    *,
    seed: int | None = None,
) -> RunResult:
    """Unsupervised greedy chain-of-thought: same proposal prompts as the
    supervised implicit arm, but the first sampled step is always taken."""
    trajectory = Trajectory(question=question)
    iterations: list[IterationTrace] = []
    for _ in range(config.max_steps):
        candidates = propose_steps(
            trajectory, "", SupervisionMode.IMPLICIT, gateway, roles.agent, config, seed=seed
        )
        iterations.append(
            IterationTrace(
                rationale=None,
                candidates=tuple(
                    ScoredStep(text=s, heuristic=None, rank_index=i)
                    for i, s in enumerate(candidates)
                ),
                chosen_index=0,
            )
        )
        if _advance(trajectory, candidates[0], config):
            break
    else:
        trajectory.terminated = True
        trajectory.termination_reason = STOP_REASON_MAX_STEPS
    if not trajectory.terminated:
        trajectory.terminated = True
        trajectory.termination_reason = STOP_REASON_PATTERN
    return RunResult(trajectory=trajectory, iterations=iterations)


def _advance(trajectory: Trajectory, step: str, config: SupervisionConfig) -> bool:
    """Append the step; True when the stop pattern fired."""
    trajectory.append(step)
    return config.stop_pattern in step


def _greedy_step(
    trajectory: Trajectory,
    gateway: Gateway,
    agent: BackendRole,
    config: SupervisionConfig,
    *,
    seed: int | None = None,
) -> str:
    completions = gateway.generate(
        GenerationRequest(
            prompt=trajectory.render(),
            num_samples=1,
            temperature=0.0,
            top_k=config.top_k,
            max_tokens=config.max_step_tokens,
            stop_strings=("\n",),
            seed=seed,
        ),
        agent,
    )
    step = completions[0].strip()
    if not step:
        raise NoCandidates("fallback greedy step was empty")
    return step
