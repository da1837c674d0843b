"""Generate graphs with the three backend families.

The oracle backend replays a lookup table (useful as ground truth), the
n-gram backend decodes with seeded nucleus sampling, and recursive
expansion grows a graph breadth-first by treating each new node as the
next situation.
"""

from stgraph import (
    EffectType,
    ExpansionPolicy,
    GenerationConfig,
    NGramBackend,
    Relation,
    RelationSchedule,
    StGraph,
    iterative_graph_gen,
    oracle_backend,
    recursive_expand,
    train_ngram,
)
from stgraph.generation import build_query

HELPS, HURTS = Relation.HELPS, Relation.HURTS
IMM = EffectType.IMMINENT

context = "Wind creates waves. Waves wash on beaches. Beaches erode over time."

print("1. oracle backend replays a table:")
oracle = oracle_backend({
    (context, "there is a storm", "helps", "imminent"): "stronger wind",
    (context, "there is a storm", "helps", "eventual"): "bigger waves",
})
graph = iterative_graph_gen(
    oracle, context, "there is a storm",
    [(HELPS, IMM), (HELPS, EffectType.EVENTUAL)],
)
print("  ", graph.flatten())

print("\n2. n-gram backend samples from learned counts:")
pairs = []
for key in range(30):
    surface = build_query(context, f"event{key}", HELPS, IMM).surface
    pairs.append((surface, f"outcome{key} follows"))
model = train_ngram(pairs * 3, n=6, backoff_factor=0.4)
backend = NGramBackend(model)
config = GenerationConfig(top_p=0.5, max_tokens=8, seed=7)
graph = iterative_graph_gen(backend, context, "event4", [(HELPS, IMM)], config)
print("  ", graph.flatten())
print("   provenance:", [
    (r["seed_index"], round(r["logprob"], 4)) for r in graph.provenance
    if r["kind"] == "query"
])

print("\n3. recursive expansion to depth 2 under a node budget:")
tree_oracle = oracle_backend({
    ("ctx", "root event", "helps", "imminent"): "first ripple",
    ("ctx", "root event", "hurts", "imminent"): "first damper",
    ("ctx", "first ripple", "helps", "imminent"): "second ripple",
    ("ctx", "first ripple", "hurts", "imminent"): "second damper",
    ("ctx", "first damper", "helps", "imminent"): "counter move",
    ("ctx", "first damper", "hurts", "imminent"): "full stop",
})
graph = StGraph("ctx", "root event")
schedule = RelationSchedule([(HELPS, IMM), (HURTS, IMM)])
recursive_expand(tree_oracle, graph, [graph.root.id],
                 ExpansionPolicy(max_depth=2, max_nodes=6, per_node_schedule=schedule))
print("  ", graph.flatten())
print("   stop record:", graph.provenance[-1])
