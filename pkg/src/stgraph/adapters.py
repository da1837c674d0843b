"""Adapters that turn raw dataset records into situational reasoning examples.

Three source formats are supported, one JSONL object per line:

wiqa (procedural-text perturbations)
    {"context": str, "perturbation": str,
     "chain": [{"text": str, "polarity": "positive"|"negative"}, ...],
     "label": optional, "no_effect" marks records with nothing to generate}

quarel (qualitative story questions)
    {"context": str,
     "logical_form": {"premise": str, "options": [str, str]},
     "answer": 0|1,            # index of the option the premise entails
     "eventual": optional str} # answer-level consequence, when derivable
    Options must already be phrased as consequents of the premise; any
    comparative negation is the upstream converter's job.

defeasible (evidence that strengthens or weakens a hypothesis)
    {"premise": str, "hypothesis": str, "update": str,
     "update_type": "strengthener"|"weakener"}

Adapters are pure per-record functions; malformed records raise
:class:`RecordSkip`, which :func:`load_split` logs and skips so that noisy
public dumps never abort a run.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Iterator

from .graph import EffectType, Relation, StGraph
from .text import normalize_text

logger = logging.getLogger(__name__)

DATASETS = ("wiqa", "quarel", "defeasible")
SPLITS = ("train", "dev", "test")

# Relations each source dataset is allowed to emit.
LEGAL_RELATIONS = {
    "wiqa": frozenset({Relation.HELPS, Relation.HURTS}),
    "quarel": frozenset({Relation.ENTAILS, Relation.CONTRADICTS}),
    "defeasible": frozenset({Relation.STRENGTHENS, Relation.WEAKENS}),
}

# Published full-data split sizes, used as expected counts when no fixture
# manifest overrides them. Mismatch is a warning, never an error.
FULL_DATA_COUNTS = {
    ("wiqa", "train"): 119_200,
    ("wiqa", "dev"): 34_800,
    ("wiqa", "test"): 34_800,
    ("quarel", "train"): 4_600,
    ("quarel", "dev"): 1_300,
    ("quarel", "test"): 652,
    ("defeasible", "train"): 200_000,
    ("defeasible", "dev"): 14_900,
    ("defeasible", "test"): 15_400,
}


class RecordSkip(Exception):
    """Raised by adapters for records that cannot be adapted (not fatal)."""


def group_key_for(context: str, situation: str) -> str:
    digest = hashlib.sha1(
        f"{normalize_text(context)}\x1f{normalize_text(situation)}".encode("utf-8")
    )
    return digest.hexdigest()[:16]


@dataclass
class StExample:
    """One supervised (query, answer) pair in the situational formulation."""

    context: str
    situation: str
    relation: Relation
    effect: EffectType
    answer: str
    dataset: str
    split: str
    group_key: str = field(default="")

    def __post_init__(self):
        if not normalize_text(self.answer):
            raise ValueError("answer must be non-empty")
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.relation not in LEGAL_RELATIONS[self.dataset]:
            raise ValueError(
                f"relation {self.relation.value} not legal for dataset {self.dataset}"
            )
        if not self.group_key:
            self.group_key = group_key_for(self.context, self.situation)

    def to_json_line(self) -> str:
        payload = {
            "answer": self.answer,
            "context": self.context,
            "dataset": self.dataset,
            "effect": self.effect.value,
            "group_key": self.group_key,
            "relation": self.relation.value,
            "situation": self.situation,
            "split": self.split,
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, payload: dict) -> "StExample":
        return cls(
            context=payload["context"],
            situation=payload["situation"],
            relation=Relation(payload["relation"]),
            effect=EffectType(payload["effect"]),
            answer=payload["answer"],
            dataset=payload["dataset"],
            split=payload["split"],
            group_key=payload.get("group_key", ""),
        )


@dataclass
class SplitManifest:
    dataset: str
    split: str
    expected_count: int | None
    observed_count: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "expected_count": self.expected_count,
            "observed_count": self.observed_count,
            "split": self.split,
        }


def _require_str(record: dict, key: str) -> str:
    value = record.get(key)
    if not isinstance(value, str) or not value.strip():
        raise RecordSkip(f"missing or empty field {key!r}")
    return value


def adapt_wiqa(record: dict, split: str = "train") -> list[StExample]:
    """One example per reasoning hop: hop 1 is imminent, later hops eventual."""
    if record.get("label") == "no_effect":
        return []  # nothing to generate; kept for the QA exporter
    context = _require_str(record, "context")
    situation = _require_str(record, "perturbation")
    chain = record.get("chain")
    if not isinstance(chain, list) or not chain:
        raise RecordSkip("missing reasoning chain")
    out = []
    for hop, entry in enumerate(chain):
        if not isinstance(entry, dict):
            raise RecordSkip(f"chain hop {hop} is not an object")
        text = entry.get("text")
        polarity = entry.get("polarity")
        if not isinstance(text, str) or not normalize_text(text):
            raise RecordSkip(f"chain hop {hop} has empty text")
        if polarity == "positive":
            relation = Relation.HELPS
        elif polarity == "negative":
            relation = Relation.HURTS
        else:
            raise RecordSkip(f"chain hop {hop} has unknown polarity {polarity!r}")
        effect = EffectType.IMMINENT if hop == 0 else EffectType.EVENTUAL
        out.append(
            StExample(context, situation, relation, effect, text, "wiqa", split)
        )
    return out


def adapt_quarel(record: dict, split: str = "train") -> list[StExample]:
    """Entailed and contradicted consequents of the logical-form premise."""
    context = _require_str(record, "context")
    form = record.get("logical_form")
    if not isinstance(form, dict):
        raise RecordSkip("unparseable logical form")
    premise = form.get("premise")
    options = form.get("options")
    answer = record.get("answer")
    if not isinstance(premise, str) or not normalize_text(premise):
        raise RecordSkip("logical form has no premise")
    if (
        not isinstance(options, list)
        or len(options) != 2
        or not all(isinstance(o, str) and normalize_text(o) for o in options)
    ):
        raise RecordSkip("logical form needs exactly two consequent options")
    if answer not in (0, 1):
        raise RecordSkip(f"answer key must be 0 or 1, got {answer!r}")

    out = [
        StExample(
            context, premise, Relation.ENTAILS, EffectType.IMMINENT,
            options[answer], "quarel", split,
        ),
        StExample(
            context, premise, Relation.CONTRADICTS, EffectType.IMMINENT,
            options[1 - answer], "quarel", split,
        ),
    ]
    eventual = record.get("eventual")
    if isinstance(eventual, str) and normalize_text(eventual):
        out.append(
            StExample(
                context, premise, Relation.ENTAILS, EffectType.EVENTUAL,
                eventual, "quarel", split,
            )
        )
    return out


def adapt_defeasible(record: dict, split: str = "train") -> list[StExample]:
    """Deductive reorientation: the update either strengthens or weakens."""
    premise = _require_str(record, "premise")
    hypothesis = _require_str(record, "hypothesis")
    update = _require_str(record, "update")
    update_type = record.get("update_type")
    if update_type == "strengthener":
        relation = Relation.STRENGTHENS
    elif update_type == "weakener":
        relation = Relation.WEAKENS
    else:
        raise RecordSkip(f"unknown update_type {update_type!r}")
    return [
        StExample(
            premise, update, relation, EffectType.IMMINENT,
            hypothesis, "defeasible", split,
        )
    ]


_ADAPTERS = {
    "wiqa": adapt_wiqa,
    "quarel": adapt_quarel,
    "defeasible": adapt_defeasible,
}


def load_split(
    path,
    dataset: str,
    split: str,
    expected_count: int | None = None,
) -> tuple[Iterator[StExample], SplitManifest]:
    """Stream adapted examples from a JSONL file.

    ``observed_count`` counts raw records successfully adapted (malformed
    lines and skipped records are excluded) and is final once the stream is
    exhausted; the stream is single-consumer. When ``expected_count`` is not
    given, the published full-data size for (dataset, split) is assumed, so
    fixture-sized inputs warn rather than fail.
    """
    if dataset not in _ADAPTERS:
        raise ValueError(f"unknown dataset {dataset!r}")
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    adapter = _ADAPTERS[dataset]
    if expected_count is None:
        expected_count = FULL_DATA_COUNTS.get((dataset, split))
    manifest = SplitManifest(dataset, split, expected_count)
    handle = open(path, "r", encoding="utf-8")

    def stream() -> Iterator[StExample]:
        try:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    logger.warning("%s:%d skipped: malformed JSON (%s)", path, lineno, exc.msg)
                    continue
                try:
                    examples = adapter(record, split)
                except RecordSkip as exc:
                    logger.warning("%s:%d skipped: %s", path, lineno, exc)
                    continue
                manifest.observed_count += 1
                yield from examples
            if (
                manifest.expected_count is not None
                and manifest.observed_count != manifest.expected_count
            ):
                logger.warning(
                    "%s %s: observed %d records, expected %d",
                    dataset,
                    split,
                    manifest.observed_count,
                    manifest.expected_count,
                )
        finally:
            handle.close()

    return stream(), manifest


def group_examples(examples) -> dict[str, list[StExample]]:
    """Group a stream by group_key, preserving first-appearance order."""
    groups: dict[str, list[StExample]] = {}
    for ex in examples:
        groups.setdefault(ex.group_key, []).append(ex)
    return groups


def reference_graph(examples: list[StExample]) -> StGraph:
    """Recompose a group of examples into its reference graph.

    Inverse of the decomposition that produced the examples: the shared
    situation is the root and every example contributes one edge to a node
    holding its answer (merged by normalized text).
    """
    if not examples:
        raise ValueError("examples must be non-empty")
    keys = {ex.group_key for ex in examples}
    if len(keys) != 1:
        raise ValueError(f"examples span multiple groups: {sorted(keys)}")
    first = examples[0]
    graph = StGraph(first.context, first.situation)
    for ex in examples:
        graph.add_node(graph.root.id, ex.relation, ex.effect, ex.answer)
    return graph
