"""Overlap metrics over flattened graphs, plus automated consistency analysis.

The BLEU variant is pinned exactly so scores are reproducible: corpus-level
modified n-gram precision with clipping for n = 1..max_n, geometric mean,
brevity penalty exp(1 - r/c) when c < r. Levels with zero matches enter the
mean as epsilon 1e-9; levels where the hypothesis corpus has no n-grams at
all (sentences shorter than n) are excluded, so identical corpora always
score 100. ROUGE-L is the LCS-based F-measure with beta = 1.2.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .backends import GenerationConfig, GenerationFailure, GeneratorBackend
from .generation import ExpansionPolicy, RelationSchedule, build_query, recursive_expand
from .graph import EffectType, Polarity, Relation, StGraph
from .rand import derive_seed
from .text import normalize_text, tokenize

_EPSILON = 1e-9


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
) -> float:
    """Corpus-level BLEU on pre-tokenized sequences, scaled to [0, 100]."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"got {len(hypotheses)} hypotheses but {len(references)} references"
        )
    if not hypotheses:
        raise ValueError("corpus must be non-empty")
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    if hyp_len == 0:
        return 0.0
    log_precisions = []
    for n in range(1, max_n + 1):
        matches = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            total += sum(hyp_counts.values())
            matches += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        if total == 0:
            continue  # no n-grams of this order anywhere; level undefined
        precision = matches / total if matches else _EPSILON
        log_precisions.append(math.log(precision))
    if not log_precisions:
        return 0.0
    geo_mean = math.exp(sum(log_precisions) / len(log_precisions))
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * geo_mean


def rouge_l(
    hypothesis: Sequence[str],
    reference: Sequence[str],
    beta: float = 1.2,
) -> tuple[float, float, float]:
    """LCS-based (precision, recall, F); zero triple when nothing aligns."""
    if not hypothesis or not reference:
        raise ValueError("hypothesis and reference must be non-empty")
    lcs = _lcs_length(hypothesis, reference)
    if lcs == 0:
        return (0.0, 0.0, 0.0)
    precision = lcs / len(hypothesis)
    recall = lcs / len(reference)
    b2 = beta * beta
    f = (1 + b2) * precision * recall / (recall + b2 * precision)
    return (precision, recall, f)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # O(len(a) * len(b)) time, O(len(b)) space.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def token_f1(a: Sequence[str], b: Sequence[str]) -> float:
    """Multiset token overlap F1 between two token sequences."""
    if not a or not b:
        return 0.0
    common = sum((Counter(a) & Counter(b)).values())
    if common == 0:
        return 0.0
    precision = common / len(a)
    recall = common / len(b)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PairScore:
    bleu: float
    rouge: float


@dataclass
class EvalReport:
    bleu: float
    rouge_l_f: float
    n_pairs: int
    per_pair: list[PairScore]

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "n_pairs": self.n_pairs,
            "per_pair": [{"bleu": p.bleu, "rouge": p.rouge} for p in self.per_pair],
            "rouge_l_f": self.rouge_l_f,
        }


def eval_graphs(generated: Sequence[StGraph], references: Sequence[StGraph]) -> EvalReport:
    """Flatten paired graphs and score corpus BLEU-4 plus mean ROUGE-L F.

    Pairs are matched by index and must share (context, situation).
    """
    if len(generated) != len(references):
        raise ValueError(
            f"got {len(generated)} generated graphs but {len(references)} references"
        )
    if not generated:
        raise ValueError("no graph pairs to evaluate")
    hyp_tokens = []
    ref_tokens = []
    for i, (gen, ref) in enumerate(zip(generated, references)):
        if normalize_text(gen.context) != normalize_text(ref.context) or normalize_text(
            gen.situation
        ) != normalize_text(ref.situation):
            raise ValueError(f"pair {i}: generated and reference graphs disagree "
                             "on (context, situation)")
        hyp_tokens.append(tokenize(gen.flatten()))
        ref_tokens.append(tokenize(ref.flatten()))
    per_pair = [
        PairScore(
            bleu=bleu([h], [r]),
            rouge=100.0 * rouge_l(h, r)[2],
        )
        for h, r in zip(hyp_tokens, ref_tokens)
    ]
    corpus_bleu = bleu(hyp_tokens, ref_tokens)
    mean_rouge = sum(p.rouge for p in per_pair) / len(per_pair)
    return EvalReport(corpus_bleu, mean_rouge, len(per_pair), per_pair)


def bleu_by_order(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    up_to: int = 4,
) -> dict[int, float]:
    """BLEU-1..BLEU-up_to, for comparing against any reporting convention."""
    return {n: bleu(hypotheses, references, max_n=n) for n in range(1, up_to + 1)}


# -- consistency analysis ---------------------------------------------------


@dataclass(frozen=True)
class Criterion:
    """Match rule for consistency checks: exact text or token-F1 threshold."""

    kind: str  # "exact" or "token_f1"
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "token_f1"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "token_f1" and self.threshold is None:
            raise ValueError("token_f1 criterion needs a threshold")

    def matches(self, answer: str, target: str) -> bool:
        if self.kind == "exact":
            return normalize_text(answer) == normalize_text(target)
        return token_f1(tokenize(answer), tokenize(target)) >= self.threshold

    def describe(self) -> str:
        if self.kind == "exact":
            return "exact"
        return f"token_f1>={self.threshold}"


EXACT = Criterion("exact")


@dataclass
class ConsistencyReport:
    n_paths: int
    n_consistent: int
    rate: float | None  # None when no two-hop paths were found
    criterion: str

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "n_consistent": self.n_consistent,
            "n_paths": self.n_paths,
            "rate": self.rate,
        }


def consistency_rate(
    backend: GeneratorBackend,
    cases: Sequence[tuple[str, str]],
    schedule: RelationSchedule,
    policy: ExpansionPolicy,
    criterion: Criterion = Criterion("token_f1", 0.8),
    config: GenerationConfig | None = None,
) -> ConsistencyReport:
    """Check two-hop compositions against direct eventual answers.

    For every generated A -> B -> C path whose edges are both positive, the
    backend is asked what A helps eventually; the path is consistent when the
    answer matches C under the criterion. Direct-probe failures count as
    inconsistent paths.
    """
    if not backend.can_generate:
        raise ValueError(f"backend {backend.name!r} cannot generate")
    config = config or GenerationConfig()
    expand_policy = ExpansionPolicy(policy.max_depth, policy.max_nodes, schedule)
    n_paths = 0
    n_consistent = 0
    for case_index, (context, situation) in enumerate(cases):
        graph = StGraph(context, situation)
        gen_config = config.with_seed(derive_seed(config.seed, 2 * case_index))
        recursive_expand(backend, graph, [graph.root.id], expand_policy, gen_config)
        probe_master = derive_seed(config.seed, 2 * case_index + 1)
        for path_index, (a, _b, c, r1, r2) in enumerate(graph.paths_of_length_two()):
            if r1.polarity is not Polarity.POSITIVE or r2.polarity is not Polarity.POSITIVE:
                continue
            n_paths += 1
            query = build_query(context, a.text, Relation.HELPS, EffectType.EVENTUAL)
            probe_config = config.with_seed(derive_seed(probe_master, path_index))
            try:
                answer = backend.generate(query, probe_config)
            except GenerationFailure:
                continue
            if criterion.matches(answer.text, c.text):
                n_consistent += 1
    rate = n_consistent / n_paths if n_paths else None
    return ConsistencyReport(n_paths, n_consistent, rate, criterion.describe())
