"""Build a small influence graph by hand and inspect it.

A graph starts from a context passage and a situation phrase (the root).
Every add_node call attaches one influence edge; targets merge by
normalized text, and edges that would close a cycle are skipped rather
than raised.
"""

from stgraph import EffectType, Relation, StGraph

context = "Wind creates waves. Waves wash on beaches. Beaches erode over time."
graph = StGraph(context, "there is a storm")
root = graph.root.id

graph.add_node(root, Relation.HELPS, EffectType.IMMINENT, "stronger wind")
wind = graph.add_node(root, Relation.HELPS, EffectType.IMMINENT, "Stronger   Wind.")
print(f"re-adding a variant spelling merged into node {wind.node_id} "
      f"(created={wind.created}, skipped={wind.skipped})")

waves = graph.add_node(wind.node_id, Relation.HELPS, EffectType.IMMINENT, "bigger waves")
graph.add_node(waves.node_id, Relation.HURTS, EffectType.EVENTUAL, "calm beaches")

echo = graph.add_node(waves.node_id, Relation.HELPS, EffectType.EVENTUAL, "there is a storm")
print(f"an edge back to the root is refused: skipped={echo.skipped}")

print("\nflattened:")
print(" ", graph.flatten())

print("\ntwo-hop paths (A -> B -> C):")
for a, b, c, r1, r2 in graph.paths_of_length_two():
    print(f"  {a.norm} -[{r1.value}]-> {b.norm} -[{r2.value}]-> {c.norm}")

print("\nvalidate() ->", graph.validate())

print("\nDOT export (positive edges green, negative red):")
print(graph.to_dot())
