"""Reformulate raw what-if records into situational examples.

Three source styles are supported: procedural-text perturbations (wiqa),
qualitative logical forms (quarel), and defeasible evidence updates.
Each group of examples sharing (context, situation) recomposes into a
reference graph.
"""

from pathlib import Path

from stgraph import group_examples, load_split, reference_graph

fixtures = Path(__file__).parent.parent / "tests" / "fixtures"

for dataset in ("wiqa", "quarel", "defeasible"):
    stream, manifest = load_split(
        fixtures / f"{dataset}_train.jsonl", dataset, "train", expected_count=None
    )
    examples = list(stream)
    print(f"{dataset}: {manifest.observed_count} records -> {len(examples)} examples "
          f"(expected at full scale: {manifest.expected_count})")
    for ex in examples[:2]:
        print(f"  ({ex.relation.value}, {ex.effect.value}) "
              f"st={ex.situation!r} -> {ex.answer!r}")

print("\nrecomposing one wiqa group into its reference graph:")
stream, _ = load_split(fixtures / "wiqa_train.jsonl", "wiqa", "train", expected_count=10)
groups = group_examples(stream)
first_group = next(iter(groups.values()))
graph = reference_graph(first_group)
print(" ", graph.flatten())
print("  validate() ->", graph.validate())
