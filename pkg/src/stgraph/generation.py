"""Query construction and iterative st-graph generation.

A generation run walks an ordered schedule of (relation, effect) pairs,
renders one natural-language query per pair, decodes an answer from the
backend, and attaches it to the graph. Recursive expansion repeats the
per-node schedule breadth-first, treating each new node's text as the next
situation within the same context.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .backends import GenerationConfig, GenerationFailure, GeneratorBackend
from .graph import EffectType, Relation, StGraph, StQuery
from .rand import derive_seed
from .text import normalize_text

RELATION_VERBS = {
    Relation.HELPS: "help",
    Relation.HURTS: "hurt",
    Relation.ENTAILS: "entail",
    Relation.CONTRADICTS: "contradict",
    Relation.STRENGTHENS: "strengthen",
    Relation.WEAKENS: "weaken",
    Relation.HELPED_BY: "helped by",
    Relation.HURT_BY: "hurt by",
}

TEMPLATES = {
    "default": "{context} </ctx> what does {situation} {verb} {effect} ? </q>",
}


class RelationSchedule:
    """Ordered (relation, effect) pairs driving one generation pass.

    Duplicates are permitted; each schedule position draws from its own
    seed stream, so repeated pairs can sample different targets.
    """

    def __init__(self, pairs: Iterable[tuple[Relation, EffectType]]):
        self.pairs = tuple(pairs)
        if not self.pairs:
            raise ValueError("schedule must be non-empty")
        for rel, eff in self.pairs:
            if not isinstance(rel, Relation) or not isinstance(eff, EffectType):
                raise ValueError(f"bad schedule entry ({rel!r}, {eff!r})")

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def parse(cls, spec: str) -> "RelationSchedule":
        """Parse "helps:imminent,hurts:eventual" into a schedule."""
        pairs = []
        for chunk in spec.split(","):
            rel_name, _, eff_name = chunk.strip().partition(":")
            pairs.append((Relation(rel_name.strip()), EffectType(eff_name.strip())))
        return cls(pairs)


def _as_schedule(schedule) -> RelationSchedule:
    if isinstance(schedule, RelationSchedule):
        return schedule
    return RelationSchedule(schedule)


# Forward influences of a cause, and reversed influences of an ending.
R_FWD = RelationSchedule([(Relation.HELPS, EffectType.IMMINENT),
                          (Relation.HURTS, EffectType.IMMINENT)])
R_REV = RelationSchedule([(Relation.HELPED_BY, EffectType.IMMINENT),
                          (Relation.HURT_BY, EffectType.IMMINENT)])


@dataclass(frozen=True)
class ExpansionPolicy:
    max_depth: int
    max_nodes: int
    per_node_schedule: RelationSchedule

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_nodes < 2:
            raise ValueError(f"max_nodes must be >= 2, got {self.max_nodes}")


def build_query(
    context: str,
    situation: str,
    relation: Relation,
    effect: EffectType,
    template: str = "default",
) -> StQuery:
    """Render the query surface for one (context, situation, relation, effect)."""
    if not normalize_text(context):
        raise ValueError("context must be non-empty")
    if not normalize_text(situation):
        raise ValueError("situation must be non-empty")
    surface = TEMPLATES[template].format(
        context=context,
        situation=situation,
        verb=RELATION_VERBS[relation],
        effect=effect.value,
    )
    return StQuery(context, situation, relation, effect, surface)


def _run_query(
    backend: GeneratorBackend,
    graph: StGraph,
    source_id: int,
    situation: str,
    relation: Relation,
    effect: EffectType,
    config: GenerationConfig,
    stream_index: int,
    template: str,
):
    """Issue one query and commit the answer; failures are recorded, not raised."""
    seed = derive_seed(config.seed, stream_index)
    query = build_query(graph.context, situation, relation, effect, template)
    record = {
        "kind": "query",
        "surface": query.surface,
        "relation": relation.value,
        "effect": effect.value,
        "backend": backend.name,
        "seed_index": stream_index,
        "seed": seed,
    }
    try:
        out = backend.generate(query, config.with_seed(seed))
    except GenerationFailure as exc:
        record.update({"error": str(exc)})
        graph.provenance.append(record)
        return None
    if not normalize_text(out.text):
        record.update({"error": "empty answer"})
        graph.provenance.append(record)
        return None
    result = graph.add_node(source_id, relation, effect, out.text)
    record.update(
        {
            "answer": out.text,
            "logprob": out.logprob,
            "truncated": out.truncated,
            "node": result.node_id,
            "edge_added": result.edge_added,
            "skip": result.skipped,
        }
    )
    graph.provenance.append(record)
    return result


def iterative_graph_gen(
    backend: GeneratorBackend,
    context: str,
    situation: str,
    schedule,
    config: GenerationConfig | None = None,
    template: str = "default",
) -> StGraph:
    """Build an st-graph by querying the backend once per schedule entry.

    Every answer attaches to the root. Per-edge provenance records the query
    surface, seed stream index, logprob, and truncation flag; failed queries
    are recorded and skipped so a batch never aborts on one bad sample.
    """
    if not backend.can_generate:
        raise ValueError(f"backend {backend.name!r} cannot generate")
    schedule = _as_schedule(schedule)
    config = config or GenerationConfig()
    graph = StGraph(context, situation)
    for i, (relation, effect) in enumerate(schedule):
        _run_query(backend, graph, graph.root.id, situation, relation, effect,
                   config, i, template)
    return graph


def recursive_expand(
    backend: GeneratorBackend,
    graph: StGraph,
    frontier: Sequence[int],
    policy: ExpansionPolicy,
    config: GenerationConfig | None = None,
    template: str = "default",
) -> StGraph:
    """Expand a graph breadth-first, re-rooting queries at each frontier node.

    Each frontier node's text becomes the situation for a fresh pass of the
    per-node schedule; newly created (not merged) nodes form the next
    frontier. Expansion stops at max_depth, at the node budget, or when the
    frontier empties; the stop reason lands in provenance. Mutates ``graph``
    and returns it.
    """
    if not backend.can_generate:
        raise ValueError(f"backend {backend.name!r} cannot generate")
    for node_id in frontier:
        graph.node(node_id)  # KeyError on unknown frontier ids
    config = config or GenerationConfig()
    current = list(frontier)
    depth = 0
    stream_index = 0
    stop_reason = None
    while current and depth < policy.max_depth and stop_reason is None:
        nxt: list[int] = []
        for node_id in current:
            situation = graph.node(node_id).text
            for relation, effect in policy.per_node_schedule:
                if len(graph.nodes) >= policy.max_nodes:
                    stop_reason = "node-budget"
                    break
                result = _run_query(backend, graph, node_id, situation, relation,
                                    effect, config, stream_index, template)
                stream_index += 1
                if result is not None and result.created:
                    nxt.append(result.node_id)
            if stop_reason:
                break
        if stop_reason:
            break
        current = nxt
        depth += 1
    if stop_reason is None:
        stop_reason = "max-depth" if current else "frontier-exhausted"
    graph.provenance.append({"kind": "stop", "reason": stop_reason, "depth": depth})
    return graph
