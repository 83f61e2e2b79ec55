"""Scripted mock worlds for supervision, evaluation, and pipeline tests.

Run as a script to materialize the demo directory:

    python3 tests/worlds.py demo/
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from rationalekit.extraction import load_template, split_sentences, split_steps
from rationalekit.filtering import join_context
from rationalekit.jsonl import write_json, write_records

from helpers import script_continuation

WRONG_STEP = "The final answer is: 999"


@dataclass
class ToyQuestion:
    index: int
    baseline_errs: bool

    @property
    def question(self) -> str:
        return f"Question {self.index}: what is {self.index} plus {self.index + 1}?"

    @property
    def gold(self) -> str:
        return str(2 * self.index + 1)

    @property
    def gold_steps(self) -> list[str]:
        return [
            f"Start with {self.index}.",
            f"Add {self.index + 1} to it.",
            f"The final answer is: {self.gold}",
        ]

    @property
    def rationales(self) -> list[str]:
        return [
            "We should first name the starting number.",
            "We should now add the second number.",
            "We should now state the total.",
        ]


@dataclass
class ToyWorld:
    """Per-role fixtures for a gold-chain suite plus its task records."""

    ra: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    scorer: dict = field(default_factory=dict)
    questions: list[ToyQuestion] = field(default_factory=list)

    def task_records(self, task_tag: str = "toy-math") -> list[dict]:
        return [
            {"id": f"q{q.index}", "question": q.question, "gold": q.gold, "task_tag": task_tag}
            for q in self.questions
        ]


def gold_chain_world(
    num_questions: int = 20, num_wrong: int = 3, explicit: bool = False
) -> ToyWorld:
    """A world where rationale-conditioned scoring strictly favors each
    question's 3-step gold chain, while the agent's first sample is a wrong
    final answer for the first `num_wrong` questions (so the greedy baseline
    errs on exactly those).
    """
    world = ToyWorld(
        ra={"completions": {}},
        agent={"completions": {}, "token_probs": {}},
        scorer={"token_probs": {}},
    )
    for index in range(num_questions):
        toy = ToyQuestion(index=index, baseline_errs=index < num_wrong)
        world.questions.append(toy)
        render = toy.question
        for turn, (step, rationale) in enumerate(zip(toy.gold_steps, toy.rationales)):
            world.ra["completions"][render] = [rationale]
            candidates = [WRONG_STEP, step] if toy.baseline_errs else [step, WRONG_STEP]
            if explicit:
                world.agent["completions"][render + "\n" + rationale] = candidates
            else:
                world.agent["completions"][render] = candidates
            prefix = join_context(render, rationale) + "\n"
            probs = world.agent["token_probs"] if explicit else world.scorer["token_probs"]
            script_continuation(probs, prefix, step, 0.9)
            script_continuation(probs, prefix, WRONG_STEP, 0.1)
            render = render + "\n" + step
    return world


# -- full pipeline fixture directory --

CORPUS_DOCS = [
    {
        "id": "web-001",
        "source": "web",
        "text": (
            "The ferry was cancelled on Friday. Everyone drove the long way around the lake. "
            "The market had sold out by noon."
        ),
    },
    {
        "id": "web-002",
        "source": "web",
        "text": (
            "Nora unplugged the freezer before the storm. The food inside stayed frozen overnight. "
            "She sold all of it at the weekend stall."
        ),
    },
    {
        "id": "web-003",
        "source": "web",
        "text": "A single sentence with no useful reasoning content at all.",
    },
    {
        "id": "forum-001",
        "source": "forum",
        "text": (
            "The compiler flagged an unused variable. The build still succeeded. "
            "The warning disappeared after the refactor."
        ),
    },
    {
        "id": "forum-002",
        "source": "forum",
        "text": "Offtopic chatter about the weather in three short bursts. More chatter. Even more.",
    },
    {
        "id": "forum-003",
        "source": "forum",
        "text": (
            "The cache was warmed before the benchmark. The first request was still slow. "
            "Later requests were fast."
        ),
    },
]

# web-003 sits below the similarity threshold; forum-002 exceeds the token cap.
DOC_EMBEDDINGS = {
    "web-001": [2.0, 0.0, 0.0, 0.0, 1.0],
    "web-002": [3.0, 1.0, 0.0, 0.0, 0.0],
    "web-003": [0.0, 1.0, 0.0, 0.0, 0.0],
    "forum-001": [1.0, 0.0, 0.0, 0.0, 0.0],
    "forum-002": [1.0, 0.0, 0.0, 0.0, 0.0],
    "forum-003": [2.0, 0.0, 1.0, 0.0, 0.0],
}

DOC_TOKEN_COUNTS = {"forum-002": 2001}

REFERENCE_PAIRS = [
    {
        "question": "A box holds 6 eggs. How many eggs are in 2 boxes?",
        "answer": "Two boxes hold 6 * 2 = 12 eggs.\nThe final answer is: 12",
    },
    {
        "question": "Why do wet roads cause accidents?",
        "answer": "Wet roads reduce tire grip.\nLess grip means longer stopping distances.\nThe final answer is: less grip",
    },
]

QA_PAIRS = [
    {
        "id": "001",
        "dataset": "demo-math",
        "question": "A pack has 4 pencils. Tom buys 3 packs. How many pencils does he have?",
        "answer": "Each pack has 4 pencils.\nTom has 4 * 3 = 12 pencils.\nThe final answer is: 12",
        "gold_final": "12",
        "rationale": "Multiply the packs by the pencils per pack.",
        "helpful": True,
    },
    {
        "id": "002",
        "dataset": "demo-math",
        "question": "Mia reads 5 pages a day. How many pages does she read in 4 days?",
        "answer": "She reads 5 pages each day.\nOver 4 days that is 5 * 4 = 20 pages.\nThe final answer is: 20",
        "gold_final": "20",
        "rationale": "The total is 20 because we multiply rate by days.",
        "helpful": True,
    },
    {
        "id": "003",
        "dataset": "demo-math",
        "question": "A jar has 9 marbles. Three are blue. How many are not blue?",
        "answer": "There are 9 marbles in total.\n9 - 3 = 6 are not blue.\nThe final answer is: 6",
        "gold_final": "6",
        "rationale": "Subtract the blue marbles from the total count.",
        "helpful": True,
    },
]

CORPUS_RATIONALES = {
    "web-001": ("Without the ferry, the trip takes much longer.", True),
    "web-002": ("An unplugged freezer stays cold only if it is kept shut.", True),
    "forum-001": ("Unused-variable warnings do not stop compilation.", True),
    "forum-003": ("Cache warming only helps requests after the first.", False),
}


def pipeline_world(root: Path) -> dict[str, Path]:
    """Write every fixture and input file a full CLI pipeline run needs.

    All paths inside config.json are relative to `root`, so commands must run
    with `root` as the working directory.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    embedder = {"embeddings": {}}
    extractor = {"completions": {}}
    scorer = {"token_probs": {}, "default_token_prob": 0.5}

    reference_records = []
    reference_embedding = [1.0, 0.0, 0.0, 0.0, 0.0]
    for pair in REFERENCE_PAIRS:
        text = f"{pair['question']}\n{pair['answer']}"
        embedder["embeddings"][text] = reference_embedding
        reference_records.append(pair)

    corpus_records = []
    corpus_template = load_template("extract_corpus")
    for doc in CORPUS_DOCS:
        token_count = DOC_TOKEN_COUNTS.get(doc["id"], len(doc["text"].split()))
        corpus_records.append({**doc, "token_count": token_count})
        embedder["embeddings"][doc["text"]] = DOC_EMBEDDINGS[doc["id"]]
        if doc["id"] not in CORPUS_RATIONALES:
            continue
        rationale, helpful = CORPUS_RATIONALES[doc["id"]]
        sentences = split_sentences(doc["text"])
        preceding = sentences[0]
        following = doc["text"][len(preceding) :]
        annotated = f"{preceding}<BOT>{rationale}<EOT> {following}"
        extractor["completions"][corpus_template.render(context=doc["text"])] = [annotated]
        script_continuation(
            scorer["token_probs"], join_context(preceding, rationale), following,
            0.9 if helpful else 0.25,
        )

    qa_records = []
    qa_template = load_template("extract_qa_math")
    for pair in QA_PAIRS:
        qa_records.append(
            {k: pair[k] for k in ("id", "dataset", "question", "answer", "gold_final")}
        )
        steps = split_steps(pair["answer"])
        preceding_answer = steps[0]
        following = pair["answer"][len(preceding_answer) :]
        annotated = f"{preceding_answer}<BOT>{pair['rationale']}<EOT>\n{following.lstrip()}"
        prompt = qa_template.render(question=pair["question"], answer=pair["answer"])
        extractor["completions"][prompt] = [annotated]
        preceding_full = pair["question"] + "\n" + preceding_answer
        script_continuation(
            scorer["token_probs"], join_context(preceding_full, pair["rationale"]), following, 0.9
        )

    toy = gold_chain_world(num_questions=4, num_wrong=1)
    scorer["token_probs"].update(toy.scorer["token_probs"])

    labeled_records = _labeled_records(scorer)

    paths = {
        "config": root / "config.json",
        "corpus": root / "corpus.jsonl",
        "reference": root / "reference.jsonl",
        "qa": root / "qa.jsonl",
        "tasks": root / "tasks.jsonl",
        "labeled": root / "labeled.jsonl",
    }
    write_records(paths["corpus"], corpus_records)
    write_records(paths["reference"], reference_records)
    write_records(paths["qa"], qa_records)
    write_records(paths["tasks"], toy.task_records(task_tag="demo-math"))
    write_records(paths["labeled"], labeled_records)
    for name, fixture in (
        ("mock_embedder", embedder),
        ("mock_extractor", extractor),
        ("mock_scorer", scorer),
        ("mock_agent", toy.agent),
        ("mock_ra", toy.ra),
    ):
        with open(root / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(fixture, fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")
    config = {
        "roles": {
            "extractor": {"endpoint": "mock://mock_extractor.json", "model": "mock-extractor"},
            "rationale_generator": {"endpoint": "mock://mock_ra.json", "model": "mock-ra"},
            "agent": {"endpoint": "mock://mock_agent.json", "model": "mock-agent"},
            "scorer": {"endpoint": "mock://mock_scorer.json", "model": "mock-scorer"},
            "embedder": {"endpoint": "mock://mock_embedder.json", "model": "mock-embedder"},
        },
        "prefilter": {"alpha": 0.3, "max_tokens": 2000},
        "weights": {"decay": 0.9, "horizon": 64},
        "tau_f": {"default": 0.0, "demo-math": 1.2},
        "supervision": {"mode": "implicit", "num_candidates": 3, "temperature": 0.7, "top_k": 3},
    }
    write_json(paths["config"], config)
    return paths


def _labeled_records(scorer: dict) -> list[dict]:
    """Small labeled set whose helpful gains sit above the unhelpful ones."""
    records = []
    for index in range(4):
        helpful = index < 2
        preceding = f"Labeled context {index} ends here."
        following = f" The outcome {index} follows directly."
        rationale = f"The link {index} explains the outcome."
        script_continuation(
            scorer["token_probs"],
            join_context(preceding, rationale),
            following,
            0.9 if helpful else 0.25,
        )
        records.append(
            {
                "source_id": f"lab-{index}",
                "position": 1,
                "preceding": preceding,
                "rationale": rationale,
                "following": following,
                "origin": "corpus",
                "source": "labeled",
                "label": "helpful" if helpful else "unhelpful",
            }
        )
    return records


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo")
    written = pipeline_world(target)
    print(f"wrote pipeline fixtures under {target}/")
    for name, path in sorted(written.items()):
        print(f"  {name}: {path}")
