"""Downstream task support: QA input augmentation and zero-shot evaluation.

Augmentation generates two influence graphs per QA item (forward influences
of the cause, reversed influences of the ending) and renders them next to
the original input. The exported JSONL is the full contract an external
classifier trainer needs: both input strings, the label, and the loss
weights alpha and beta for combining the plain and augmented losses.

Field separator in rendered inputs is the literal token "</s>".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .backends import GenerationConfig, GeneratorBackend, NEG_INF
from .generation import R_FWD, R_REV, RelationSchedule, iterative_graph_gen
from .graph import StGraph
from .rand import derive_seed

SEPARATOR = "</s>"

QA_LABELS = ("helps", "hurts", "no_effect")

# Loss weights an external trainer should apply to the plain and augmented
# cross-entropy terms; overridable per run.
DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.9


@dataclass
class QaItem:
    context: str
    cause: str
    ending: str
    label: str
    hop_count: int | None = None
    question_type: str | None = None

    def __post_init__(self):
        if self.label not in QA_LABELS:
            raise ValueError(f"label must be one of {QA_LABELS}, got {self.label!r}")

    @classmethod
    def from_dict(cls, payload: dict) -> "QaItem":
        return cls(
            context=payload["context"],
            cause=payload["cause"],
            ending=payload["ending"],
            label=payload["label"],
            hop_count=payload.get("hop_count"),
            question_type=payload.get("question_type"),
        )


@dataclass
class AugmentedQaItem:
    input_main: str
    input_aug: str
    label: str
    graphs: tuple[StGraph, StGraph]
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    question_type: str | None = None

    def to_json_line(self) -> str:
        payload = {
            "alpha": self.alpha,
            "beta": self.beta,
            "input_aug": self.input_aug,
            "input_main": self.input_main,
            "label": self.label,
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)


def augment(
    backend: GeneratorBackend,
    item: QaItem,
    config: GenerationConfig | None = None,
    forward_schedule: RelationSchedule = R_FWD,
    reverse_schedule: RelationSchedule = R_REV,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> AugmentedQaItem:
    """Attach generated influence graphs for the cause and the ending.

    Augmentation is label-independent; generation failures stay recorded in
    the graphs' provenance and the item is never dropped.
    """
    config = config or GenerationConfig()
    cause_graph = iterative_graph_gen(
        backend, item.context, item.cause, forward_schedule,
        config.with_seed(derive_seed(config.seed, 0)),
    )
    ending_graph = iterative_graph_gen(
        backend, item.context, item.ending, reverse_schedule,
        config.with_seed(derive_seed(config.seed, 1)),
    )
    input_main = f"{item.context} {SEPARATOR} {item.cause} {SEPARATOR} {item.ending}"
    input_aug = f"{cause_graph.flatten()} {SEPARATOR} {ending_graph.flatten()}"
    return AugmentedQaItem(
        input_main=input_main,
        input_aug=input_aug,
        label=item.label,
        graphs=(cause_graph, ending_graph),
        alpha=alpha,
        beta=beta,
        question_type=item.question_type,
    )


def export_training_file(items: Sequence[AugmentedQaItem], path) -> dict:
    """Write augmented items as JSONL; returns the export manifest."""
    if not items:
        raise ValueError("nothing to export")
    labels: dict[str, int] = {}
    question_types: dict[str, int] = {}
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for item in items:
            handle.write(item.to_json_line() + "\n")
            labels[item.label] = labels.get(item.label, 0) + 1
            qt = item.question_type or "unknown"
            question_types[qt] = question_types.get(qt, 0) + 1
    return {
        "count": len(items),
        "labels": dict(sorted(labels.items())),
        "question_types": dict(sorted(question_types.items())),
    }


def read_training_file(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]


# -- zero-shot two-option evaluation -----------------------------------------


@dataclass
class ZeroShotItem:
    question: str
    options: tuple[str, str]
    knowledge: str
    gold: int  # 1 or 2

    def __post_init__(self):
        if len(self.options) != 2:
            raise ValueError("exactly two options required")
        if self.gold not in (1, 2):
            raise ValueError(f"gold must be 1 or 2, got {self.gold!r}")

    @classmethod
    def from_dict(cls, payload: dict) -> "ZeroShotItem":
        return cls(
            question=payload["question"],
            options=(payload["option1"], payload["option2"]),
            knowledge=payload["knowledge"],
            gold=payload["gold"],
        )


@dataclass(frozen=True)
class ZeroShotPick:
    choice: int
    scores: tuple[float, float]
    tie: bool


def zero_shot_pick(
    backend: GeneratorBackend,
    item: ZeroShotItem,
    knowledge_first: bool = True,
    length_normalize: bool = False,
) -> ZeroShotPick:
    """Pick the option with the higher model score of p(option | knowledge, question).

    Scores are raw summed token log-probs by default; length_normalize divides
    by token count. Exact ties pick option 1 and set the tie flag.
    """
    if not backend.can_score:
        raise ValueError(f"backend {backend.name!r} cannot score")
    if knowledge_first:
        prompt = f"{item.knowledge} {SEPARATOR} {item.question}"
    else:
        prompt = f"{item.question} {SEPARATOR} {item.knowledge}"
    scores = []
    for option in item.options:
        scored = backend.score(prompt, option)
        value = scored.logprob
        if length_normalize and value != NEG_INF and scored.token_count > 0:
            value /= scored.token_count
        scores.append(value)
    tie = scores[0] == scores[1]
    choice = 1 if scores[0] >= scores[1] else 2
    return ZeroShotPick(choice, (scores[0], scores[1]), tie)


@dataclass
class ZeroShotReport:
    accuracy: float
    n_items: int
    n_ties: int
    per_item: list[dict]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_items": self.n_items,
            "n_ties": self.n_ties,
            "per_item": self.per_item,
        }


def _json_score(value: float) -> float | None:
    # JSON has no -inf; null marks a zero-mass continuation.
    return None if value == NEG_INF else value


def zero_shot_eval(
    backend: GeneratorBackend,
    items: Sequence[ZeroShotItem],
    knowledge_first: bool = True,
    length_normalize: bool = False,
) -> ZeroShotReport:
    """Accuracy of zero-shot picks against gold, with a per-item score log."""
    if not items:
        raise ValueError("no items to evaluate")
    per_item = []
    correct = 0
    ties = 0
    for item in items:
        pick = zero_shot_pick(backend, item, knowledge_first, length_normalize)
        is_correct = pick.choice == item.gold
        correct += is_correct
        ties += pick.tie
        per_item.append(
            {
                "choice": pick.choice,
                "gold": item.gold,
                "correct": is_correct,
                "tie": pick.tie,
                "score1": _json_score(pick.scores[0]),
                "score2": _json_score(pick.scores[1]),
            }
        )
    return ZeroShotReport(correct / len(items), len(items), ties, per_item)
