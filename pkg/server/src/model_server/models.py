"""Token-level models the server can expose, plus the decode/score loops.

``NGramFileModel`` loads the versioned JSON count-table format written by
the training side (header: format_version, n, backoff_factor, vocab_size)
and answers next-token queries with normalized stupid-backoff estimates.
The two test models exist for protocol tests: uniform distributions give
closed-form scores, canned one-hot chains give deterministic generations.

Tokenization is lowercase whitespace throughout; log-probs are natural.
"""

from __future__ import annotations

import json
import math
from typing import Protocol

from .sampling import SplitMix64, draw, truncate_nucleus


def tokenize(text: str) -> list[str]:
    return text.lower().split()


class CausalModel(Protocol):
    name: str
    vocab_size: int

    def next_dist(self, tokens: list[str], stop: str) -> dict[str, float]:
        ...


class UniformTestModel:
    """Every context yields the uniform distribution over a fixed vocab."""

    def __init__(self, size: int):
        self.vocab = [f"tok{i}" for i in range(size)]
        self.name = f"uniform-{size}"
        self.vocab_size = size

    def next_dist(self, tokens: list[str], stop: str) -> dict[str, float]:
        p = 1.0 / len(self.vocab)
        return {token: p for token in self.vocab}


class CannedTestModel:
    """One-hot continuation per known prompt, then the request's stop token."""

    def __init__(self, table: dict[str, str]):
        self.table = {tuple(tokenize(k)): tokenize(v) for k, v in table.items()}
        self.name = "canned"
        self.vocab_size = len({t for v in self.table.values() for t in v})

    @classmethod
    def from_file(cls, path) -> "CannedTestModel":
        with open(path, "r", encoding="utf-8") as handle:
            return cls(json.load(handle))

    def next_dist(self, tokens: list[str], stop: str) -> dict[str, float]:
        for prompt, continuation in self.table.items():
            n = len(prompt)
            if tuple(tokens[:n]) != prompt:
                continue
            emitted = tokens[n:]
            if list(emitted) == continuation[: len(emitted)]:
                if len(emitted) < len(continuation):
                    return {continuation[len(emitted)]: 1.0}
                return {stop: 1.0}
        return {stop: 1.0}  # unknown prompt: generate nothing


class NGramFileModel:
    """Stupid-backoff n-gram model loaded from its persisted count tables."""

    FORMAT_VERSION = 1

    def __init__(self, path):
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
        version = payload.get("format_version")
        if version != self.FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        self.n = payload["n"]
        self.backoff_factor = payload["backoff_factor"]
        self.vocab = sorted(payload["vocab"])
        self.vocab_size = len(self.vocab)
        self.end_symbol = payload.get("end_symbol", "</s>")
        self.name = f"ngram-{self.n}"
        self.counts: dict[int, dict[tuple[str, ...], dict[str, int]]] = {}
        for level, table in payload["counts"].items():
            parsed = {}
            for ctx, row in table.items():
                key = tuple(ctx.split(" ")) if ctx else ()
                parsed[key] = dict(row)
            self.counts[int(level)] = parsed
        self.totals = {
            level: {ctx: sum(row.values()) for ctx, row in table.items()}
            for level, table in self.counts.items()
        }

    def next_dist(self, tokens: list[str], stop: str) -> dict[str, float]:
        ctx = tuple(tokens[-(self.n - 1):]) if self.n > 1 else ()
        start = 0
        for level in range(min(self.n - 1, len(ctx)), -1, -1):
            suffix = ctx[len(ctx) - level:]
            if self.totals.get(level, {}).get(suffix, 0) > 0:
                start = level
                break
        bf = self.backoff_factor
        raw = {}
        for token in self.vocab:
            value = None
            for level in range(start, -1, -1):
                suffix = ctx[len(ctx) - level:]
                count = self.counts.get(level, {}).get(suffix, {}).get(token, 0)
                if count > 0:
                    value = bf ** (start - level) * count / self.totals[level][suffix]
                    break
            if value is None:
                value = bf ** (start + 1) / len(self.vocab)
            raw[token] = value
        mass = math.fsum(raw.values())
        return {token: v / mass for token, v in raw.items()}


def decode(model: CausalModel, prompt: str, top_p: float, max_tokens: int,
           stop: str, seed: int) -> dict:
    """Nucleus-sampled continuation; logprob covers emitted tokens only."""
    rng = SplitMix64(seed)
    tokens = tokenize(prompt)
    emitted: list[str] = []
    logprob = 0.0
    truncated = True
    for _ in range(max_tokens):
        dist = model.next_dist(tokens, stop)
        if not dist:
            break
        token, p = draw(truncate_nucleus(dist, top_p), rng)
        if token == stop:
            truncated = False
            break
        emitted.append(token)
        logprob += math.log(p)
        tokens.append(token)
    return {
        "text": " ".join(emitted),
        "logprob": logprob,
        "token_count": len(emitted),
        "truncated": truncated,
    }


def forced_score(model: CausalModel, prompt: str, continuation: str,
                 stop: str = "</s>") -> dict:
    """Untruncated log-prob sum; null logprob encodes a zero-mass token."""
    tokens = tokenize(prompt)
    total = 0.0
    continuation_tokens = tokenize(continuation)
    for token in continuation_tokens:
        dist = model.next_dist(tokens, stop)
        p = dist.get(token, 0.0)
        if p <= 0.0:
            return {"logprob": None, "token_count": len(continuation_tokens)}
        total += math.log(p)
        tokens.append(token)
    return {"logprob": total, "token_count": len(continuation_tokens)}
