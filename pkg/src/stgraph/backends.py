"""Text-generation backends: the seam between the framework and any model.

Three implementations of the same contract:

* :class:`OracleBackend` answers from a lookup table (test seam and the
  ground truth for round-trip checks);
* :class:`NGramBackend` wraps a count-based :class:`NGramModel` decoded with
  nucleus sampling, a desk-scale stand-in for a fine-tuned language model;
* :class:`RemoteBackend` proxies generate/score over HTTP to a model server.

Scoring always uses the untruncated model distribution (top_p is a decoding
concern); generation samples from the truncated, renormalized nucleus.
"""

from __future__ import annotations

import json
import logging
import math
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .graph import StQuery
from .rand import SplitMix64
from .text import normalize_text, tokenize

logger = logging.getLogger(__name__)

END_SYMBOL = "</s>"
NEG_INF = float("-inf")

# Cumulative-mass comparisons tolerate float addition error at this scale.
_MASS_EPS = 1e-9


class BackendError(Exception):
    pass


class GenerationFailure(BackendError):
    """The model could not produce an answer; carries the partial prefix."""

    def __init__(self, message: str, partial: str = ""):
        super().__init__(message)
        self.partial = partial


class TransportError(BackendError):
    """The remote endpoint could not be reached."""


class ProtocolError(BackendError):
    """The remote endpoint violated the wire schema."""


class ServerError(BackendError):
    """The remote endpoint answered with HTTP 5xx."""


@dataclass(frozen=True)
class GenerationConfig:
    top_p: float = 1.0
    max_tokens: int = 32
    end_symbol: str = END_SYMBOL
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")

    def with_seed(self, seed: int) -> "GenerationConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class ScoredText:
    text: str
    logprob: float
    token_count: int
    truncated: bool = False


def _surface(query: StQuery | str) -> str:
    return query.surface if isinstance(query, StQuery) else query


# -- nucleus sampling -----------------------------------------------------


def nucleus_keep(dist: Mapping[str, float], top_p: float) -> list[tuple[str, float]]:
    """Truncate a distribution to its nucleus and renormalize.

    Tokens sort by descending probability, ties broken lexicographically;
    the minimal prefix whose cumulative mass reaches top_p is kept.
    """
    if not dist:
        raise ValueError("distribution is empty")
    if not 0.0 < top_p <= 1.0:
        raise ValueError(f"top_p must be in (0, 1], got {top_p}")
    total = math.fsum(dist.values())
    if any(p < 0 for p in dist.values()) or abs(total - 1.0) > _MASS_EPS:
        raise ValueError(f"probabilities must be >= 0 and sum to 1, got {total}")
    ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
    kept: list[tuple[str, float]] = []
    cum = 0.0
    for token, p in ranked:
        kept.append((token, p))
        cum += p
        if cum >= top_p - _MASS_EPS:
            break
    mass = math.fsum(p for _, p in kept)
    return [(token, p / mass) for token, p in kept]


def _draw(kept: Sequence[tuple[str, float]], rng: SplitMix64) -> tuple[str, float]:
    u = rng.random()
    cum = 0.0
    for token, p in kept:
        cum += p
        if u < cum:
            return token, p
    return kept[-1]  # float guard: u landed in residual mass


def nucleus_sample(dist: Mapping[str, float], top_p: float, rng: SplitMix64) -> str:
    """Sample one token from the renormalized nucleus of ``dist``."""
    return _draw(nucleus_keep(dist, top_p), rng)[0]


# -- n-gram model ---------------------------------------------------------

NGRAM_FORMAT_VERSION = 1


class NGramModel:
    """Count-based n-gram model with stupid backoff.

    ``counts[l]`` maps a length-l context tuple to its continuation counts.
    The next-token probability backs off from the longest stored context,
    discounting by ``backoff_factor`` per level, with a uniform-over-vocab
    floor below the unigram level; the result is normalized so every stored
    context yields a proper distribution.
    """

    def __init__(
        self,
        n: int,
        backoff_factor: float,
        counts: dict[int, dict[tuple[str, ...], dict[str, int]]],
        vocab: Iterable[str],
        end_symbol: str = END_SYMBOL,
        trained_pairs: int = 0,
    ):
        if n < 1:
            raise ValueError(f"order must be >= 1, got {n}")
        if not 0.0 < backoff_factor < 1.0:
            raise ValueError(f"backoff_factor must be in (0, 1), got {backoff_factor}")
        self.n = n
        self.backoff_factor = backoff_factor
        self.counts = counts
        self.vocab = sorted(set(vocab))
        self.end_symbol = end_symbol
        self.trained_pairs = trained_pairs
        self._totals = {
            level: {ctx: sum(row.values()) for ctx, row in table.items()}
            for level, table in counts.items()
        }

    def next_dist(self, context: Sequence[str]) -> dict[str, float]:
        """Normalized next-token distribution over the full vocabulary."""
        if not self.vocab:
            return {}
        ctx = tuple(context[-(self.n - 1):]) if self.n > 1 else ()
        start = 0
        for level in range(min(self.n - 1, len(ctx)), -1, -1):
            suffix = ctx[len(ctx) - level:]
            if self._totals.get(level, {}).get(suffix, 0) > 0:
                start = level
                break
        bf = self.backoff_factor
        raw: dict[str, float] = {}
        for token in self.vocab:
            value = None
            for level in range(start, -1, -1):
                suffix = ctx[len(ctx) - level:]
                count = self.counts.get(level, {}).get(suffix, {}).get(token, 0)
                if count > 0:
                    value = bf ** (start - level) * count / self._totals[level][suffix]
                    break
            if value is None:
                value = bf ** (start + 1) / len(self.vocab)
            raw[token] = value
        mass = math.fsum(raw.values())
        return {token: v / mass for token, v in raw.items()}

    # -- persistence (versioned JSON count tables) ----------------------

    def save(self, path) -> None:
        payload = {
            "format_version": NGRAM_FORMAT_VERSION,
            "n": self.n,
            "backoff_factor": self.backoff_factor,
            "vocab_size": len(self.vocab),
            "end_symbol": self.end_symbol,
            "vocab": self.vocab,
            "counts": {
                str(level): {" ".join(ctx): dict(sorted(row.items())) for ctx, row in table.items()}
                for level, table in self.counts.items()
            },
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True, ensure_ascii=False)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "NGramModel":
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
        version = payload.get("format_version")
        if version != NGRAM_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {version!r}")
        counts = {
            int(level): {
                tuple(ctx.split(" ")) if ctx else (): dict(row)
                for ctx, row in table.items()
            }
            for level, table in payload["counts"].items()
        }
        return cls(
            n=payload["n"],
            backoff_factor=payload["backoff_factor"],
            counts=counts,
            vocab=payload["vocab"],
            end_symbol=payload.get("end_symbol", END_SYMBOL),
        )


def train_ngram(
    pairs: Iterable[tuple[str, str]],
    n: int,
    backoff_factor: float = 0.4,
    end_symbol: str = END_SYMBOL,
) -> NGramModel:
    """Count n-grams over "query answer end_symbol" token sequences.

    Pairs with an empty answer are filtered out; the count of retained
    pairs is kept on the model and logged.
    """
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    counts: dict[int, dict[tuple[str, ...], dict[str, int]]] = {
        level: {} for level in range(n)
    }
    vocab: set[str] = set()
    retained = 0
    for query, answer in pairs:
        answer_tokens = tokenize(answer)
        if not answer_tokens:
            continue
        retained += 1
        seq = tokenize(query) + answer_tokens + [end_symbol]
        vocab.update(seq)
        for i, token in enumerate(seq):
            for level in range(min(n - 1, i) + 1):
                ctx = tuple(seq[i - level:i])
                row = counts[level].setdefault(ctx, {})
                row[token] = row.get(token, 0) + 1
    if retained == 0:
        raise ValueError("no training pairs with non-empty answers")
    logger.info("trained %d-gram model on %d pairs", n, retained)
    return NGramModel(n, backoff_factor, counts, vocab, end_symbol, trained_pairs=retained)


# -- decode / score over any token-level model ------------------------------


def decode(model: NGramModel, query: StQuery | str, config: GenerationConfig) -> ScoredText:
    """Autoregressive nucleus-sampled decoding until end symbol or token cap.

    The returned logprob accumulates the emitted tokens' probabilities under
    the truncated, renormalized sampling distributions; the end symbol is
    excluded from both text and logprob.
    """
    rng = SplitMix64(config.seed)
    context = tokenize(_surface(query))
    tokens: list[str] = []
    logprob = 0.0
    truncated = True
    for _ in range(config.max_tokens):
        dist = model.next_dist(context)
        if not dist:
            raise GenerationFailure("model produced an empty distribution", " ".join(tokens))
        token, p = _draw(nucleus_keep(dist, config.top_p), rng)
        if token == config.end_symbol:
            truncated = False
            break
        tokens.append(token)
        logprob += math.log(p)
        context.append(token)
    return ScoredText(" ".join(tokens), logprob, len(tokens), truncated=truncated)


def score(model: NGramModel, query: StQuery | str, continuation: str) -> ScoredText:
    """Sum of token log-probs of ``continuation`` under the full distribution.

    No truncation and no length normalization; a continuation token with zero
    model mass yields the -inf sentinel.
    """
    context = tokenize(_surface(query))
    tokens = tokenize(continuation)
    total = 0.0
    for token in tokens:
        dist = model.next_dist(context)
        p = dist.get(token, 0.0)
        if p <= 0.0:
            return ScoredText(continuation, NEG_INF, len(tokens))
        total += math.log(p)
        context.append(token)
    return ScoredText(continuation, total, len(tokens))


# -- backend contract -------------------------------------------------------


class GeneratorBackend:
    """Abstract generator/scorer; implementations must be thread-safe."""

    name = "backend"
    can_generate = False
    can_score = False

    def generate(self, query: StQuery | str, config: GenerationConfig) -> ScoredText:
        raise NotImplementedError

    def score(self, query: StQuery | str, continuation: str) -> ScoredText:
        raise NotImplementedError


class OracleBackend(GeneratorBackend):
    """Deterministic lookup backend keyed on (context, situation, relation, effect)."""

    name = "oracle"
    can_generate = True
    can_score = True

    def __init__(self, table: Mapping[tuple[str, str, str, str], str], default: str | None = None):
        self.table = {
            tuple(normalize_text(part) for part in key): answer
            for key, answer in table.items()
        }
        self.default = default

    @staticmethod
    def _key(query: StQuery | str) -> tuple[str, str, str, str] | None:
        if not isinstance(query, StQuery):
            return None
        return (
            normalize_text(query.context),
            normalize_text(query.situation),
            query.relation.value,
            query.effect.value,
        )

    def _lookup(self, query: StQuery | str) -> str | None:
        key = self._key(query)
        answer = self.table.get(key) if key is not None else None
        return answer if answer is not None else self.default

    def generate(self, query: StQuery | str, config: GenerationConfig) -> ScoredText:
        answer = self._lookup(query)
        if answer is None:
            raise GenerationFailure(f"no oracle answer for query {_surface(query)!r}")
        return ScoredText(answer, 0.0, len(tokenize(answer)))

    def score(self, query: StQuery | str, continuation: str) -> ScoredText:
        answer = self._lookup(query)
        count = max(len(tokenize(continuation)), 1)
        if answer is not None and normalize_text(continuation) == normalize_text(answer):
            return ScoredText(continuation, 0.0, count)
        return ScoredText(continuation, NEG_INF, count)


def oracle_backend(
    table: Mapping[tuple[str, str, str, str], str], default: str | None = None
) -> OracleBackend:
    return OracleBackend(table, default=default)


def oracle_from_examples(examples, default: str | None = None) -> OracleBackend:
    """Oracle over adapted examples; first answer wins on duplicate keys."""
    table: dict[tuple[str, str, str, str], str] = {}
    for ex in examples:
        key = (ex.context, ex.situation, ex.relation.value, ex.effect.value)
        table.setdefault(key, ex.answer)
    return OracleBackend(table, default=default)


def oracle_from_file(path, default: str | None = None) -> OracleBackend:
    """Load an oracle table from a JSON list of answer records."""
    with open(path, "r", encoding="utf-8") as handle:
        records = json.load(handle)
    table = {
        (rec["context"], rec["situation"], rec["relation"], rec["effect"]): rec["answer"]
        for rec in records
    }
    return OracleBackend(table, default=default)


class NGramBackend(GeneratorBackend):
    name = "ngram"
    can_generate = True
    can_score = True

    def __init__(self, model: NGramModel):
        self.model = model

    def generate(self, query: StQuery | str, config: GenerationConfig) -> ScoredText:
        return decode(self.model, query, config)

    def score(self, query: StQuery | str, continuation: str) -> ScoredText:
        return score(self.model, query, continuation)


class RemoteBackend(GeneratorBackend):
    """HTTP client for the generate/score wire protocol.

    Transport failures and HTTP 5xx are retried with exponential backoff up
    to the attempt budget; schema violations are protocol errors and never
    retried. Every call opens its own connection, so instances are safe to
    share across threads.
    """

    name = "remote"
    can_generate = True
    can_score = True

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 3,
                 backoff_base: float = 0.25):
        if retries < 1:
            raise ValueError("retries must be >= 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff_base = backoff_base

    def generate(self, query: StQuery | str, config: GenerationConfig) -> ScoredText:
        payload = {
            "prompt": _surface(query),
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
            "stop": config.end_symbol,
            "seed": config.seed,
        }
        body = self._post("/v1/generate", payload)
        text = self._field(body, "text", str)
        logprob = self._number(body, "logprob")
        token_count = self._field(body, "token_count", int)
        truncated = self._field(body, "truncated", bool)
        return ScoredText(text, logprob, token_count, truncated=truncated)

    def score(self, query: StQuery | str, continuation: str) -> ScoredText:
        payload = {"prompt": _surface(query), "continuation": continuation}
        body = self._post("/v1/score", payload)
        logprob = self._number(body, "logprob")
        token_count = self._field(body, "token_count", int)
        return ScoredText(continuation, logprob, token_count)

    @staticmethod
    def _field(body: dict, key: str, kind: type):
        value = body.get(key)
        if kind is int and isinstance(value, bool):
            raise ProtocolError(f"response field {key!r} has wrong type")
        if not isinstance(value, kind):
            raise ProtocolError(f"response field {key!r} missing or wrong type")
        return value

    @staticmethod
    def _number(body: dict, key: str) -> float:
        value = body.get(key)
        if value is None:
            return NEG_INF  # wire encoding for minus infinity
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ProtocolError(f"response field {key!r} missing or wrong type")
        return float(value)

    def _post(self, route: str, payload: dict) -> dict:
        data = json.dumps(payload, allow_nan=False).encode("utf-8")
        last_error: BackendError | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                request = urllib.request.Request(
                    self.endpoint + route,
                    data=data,
                    headers={"Content-Type": "application/json"},
                    method="POST",
                )
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    raw = response.read()
            except urllib.error.HTTPError as exc:
                if exc.code >= 500:
                    last_error = ServerError(f"{route} returned HTTP {exc.code}")
                    continue
                raise ProtocolError(f"{route} returned HTTP {exc.code}") from exc
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last_error = TransportError(f"{route} unreachable: {exc}")
                continue
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolError(f"{route} returned malformed JSON") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{route} returned a non-object body")
            return body
        assert last_error is not None
        raise last_error


def remote_backend(endpoint: str, timeout: float = 10.0, retries: int = 3,
                   backoff_base: float = 0.25) -> RemoteBackend:
    return RemoteBackend(endpoint, timeout=timeout, retries=retries, backoff_base=backoff_base)
