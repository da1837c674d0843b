"""Score generated graphs against references, and probe consistency.

Graphs are flattened to token sequences and compared with corpus BLEU-4
and ROUGE-L F. The consistency analyzer generates two-hop chains and
checks whether the direct "eventual" answer agrees with the composition.
"""

from stgraph import (
    Criterion,
    EffectType,
    ExpansionPolicy,
    GenerationConfig,
    Relation,
    RelationSchedule,
    bleu,
    consistency_rate,
    eval_graphs,
    iterative_graph_gen,
    oracle_backend,
    reference_graph,
    rouge_l,
    tokenize,
)
from stgraph.adapters import StExample

HELPS, IMM, EVT = Relation.HELPS, EffectType.IMMINENT, EffectType.EVENTUAL

print("sentence-level worked examples:")
print("  BLEU-2 =", bleu([tokenize("the cat sat on the mat")],
                         [tokenize("the cat is on the mat")], max_n=2))
print("  ROUGE-L =", rouge_l(tokenize("the cat"), tokenize("the cat sat")))

print("\ngraph-level evaluation (a perfect and an imperfect generator):")
context = "Rain falls on hills. Streams swell. Valleys flood."
examples = [
    StExample(context, "a storm stalls overhead", HELPS, IMM,
              "streams swell faster", "wiqa", "train"),
    StExample(context, "a storm stalls overhead", HELPS, EVT,
              "valleys flood sooner", "wiqa", "train"),
]
reference = reference_graph(examples)
perfect = oracle_backend({
    (context, "a storm stalls overhead", "helps", "imminent"): "streams swell faster",
    (context, "a storm stalls overhead", "helps", "eventual"): "valleys flood sooner",
})
sloppy = oracle_backend({}, default="something vaguely wet happens")
schedule = [(HELPS, IMM), (HELPS, EVT)]
for name, backend in (("perfect", perfect), ("sloppy", sloppy)):
    graph = iterative_graph_gen(backend, context, "a storm stalls overhead", schedule)
    report = eval_graphs([graph], [reference])
    print(f"  {name:8s} BLEU-4 {report.bleu:6.2f}  ROUGE-L-F {report.rouge_l_f:6.2f}")

print("\nconsistency of two-hop chains:")
cases = [("shared context", f"trigger {i}") for i in range(5)]
table = {}
for i, (ctx, st) in enumerate(cases):
    table[(ctx, st, "helps", "imminent")] = f"stage {i}"
    table[(ctx, f"stage {i}", "helps", "imminent")] = f"result {i}"
    # three of five direct answers agree with the composition
    table[(ctx, st, "helps", "eventual")] = f"result {i}" if i < 3 else "noise"
backend = oracle_backend(table)
chain = RelationSchedule([(HELPS, IMM)])
report = consistency_rate(
    backend, cases, chain, ExpansionPolicy(2, 16, chain),
    Criterion("exact"), GenerationConfig(seed=0),
)
print(f"  {report.n_consistent}/{report.n_paths} consistent -> rate {report.rate}")
