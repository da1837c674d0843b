"""Shared helpers for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

from stgraph import (
    GenerationConfig,
    GeneratorBackend,
    ScoredText,
    SplitMix64,
    StExample,
    group_examples,
    load_split,
    tokenize,
)

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_counts() -> dict:
    return json.loads((FIXTURES / "manifest.json").read_text(encoding="utf-8"))


def load_fixture_examples(dataset: str, split: str) -> list[StExample]:
    expected = fixture_counts()[dataset][split]["records"]
    stream, _ = load_split(
        FIXTURES / f"{dataset}_{split}.jsonl", dataset, split, expected_count=expected
    )
    return list(stream)


def all_fixture_groups() -> list[tuple[str, list[StExample]]]:
    """Every (group_key, examples) group across all bundled splits."""
    out = []
    for dataset in ("wiqa", "quarel", "defeasible"):
        for split in ("train", "dev"):
            groups = group_examples(load_fixture_examples(dataset, split))
            out.extend(groups.items())
    return out


class TableScorer(GeneratorBackend):
    """Score-only backend mapping (prompt, continuation) to a fixed logprob."""

    name = "table-scorer"
    can_score = True

    def __init__(self, table: dict[tuple[str, str], float], default: float = float("-inf")):
        self.table = table
        self.default = default

    def score(self, query, continuation: str) -> ScoredText:
        prompt = query if isinstance(query, str) else query.surface
        value = self.table.get((prompt, continuation), self.default)
        return ScoredText(continuation, value, max(len(tokenize(continuation)), 1))


class ShiftedScorer(GeneratorBackend):
    """Wraps a scorer, adding a constant to every score (argmax invariance)."""

    name = "shifted-scorer"
    can_score = True

    def __init__(self, inner: GeneratorBackend, shift: float):
        self.inner = inner
        self.shift = shift

    def score(self, query, continuation: str) -> ScoredText:
        scored = self.inner.score(query, continuation)
        value = scored.logprob
        if value != float("-inf"):
            value += self.shift
        return ScoredText(scored.text, value, scored.token_count)


class RandomTokenBackend(GeneratorBackend):
    """Baseline generator emitting uniformly random vocabulary tokens."""

    name = "random-baseline"
    can_generate = True

    def __init__(self, vocab: list[str], length: int = 3):
        self.vocab = sorted(vocab)
        self.length = length

    def generate(self, query, config: GenerationConfig) -> ScoredText:
        rng = SplitMix64(config.seed)
        tokens = [self.vocab[rng.next_u64() % len(self.vocab)] for _ in range(self.length)]
        return ScoredText(" ".join(tokens), 0.0, len(tokens))
