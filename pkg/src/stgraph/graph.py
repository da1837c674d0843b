"""Situational-reasoning graphs (st-graphs).

An st-graph is a directed acyclic graph rooted at a situation phrase.
Nodes are event/state phrases; each edge carries an influence relation
(positive or negative polarity) and an effect type (imminent or eventual).

Graphs built through :meth:`StGraph.add_node` are DAGs with every node
reachable from the root by construction; :meth:`StGraph.validate` re-checks
those invariants for graphs loaded from files.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

from .text import normalize_text


class Polarity(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Relation(Enum):
    """Influence relation carried by an edge."""

    HELPS = "helps"
    HURTS = "hurts"
    ENTAILS = "entails"
    CONTRADICTS = "contradicts"
    STRENGTHENS = "strengthens"
    WEAKENS = "weakens"
    HELPED_BY = "helped_by"
    HURT_BY = "hurt_by"

    @property
    def polarity(self) -> Polarity:
        if self in _POSITIVE:
            return Polarity.POSITIVE
        return Polarity.NEGATIVE

    @property
    def reversed(self) -> bool:
        """True for relations that point from effect back to cause."""
        return self in (Relation.HELPED_BY, Relation.HURT_BY)


_POSITIVE = frozenset(
    {Relation.HELPS, Relation.ENTAILS, Relation.STRENGTHENS, Relation.HELPED_BY}
)


class EffectType(Enum):
    IMMINENT = "imminent"
    EVENTUAL = "eventual"


# Effect kinds order imminent before eventual (direct effects first), not
# alphabetically; flatten depends on this.
_EFFECT_ORDER = {EffectType.IMMINENT: 0, EffectType.EVENTUAL: 1}


@dataclass(frozen=True)
class Node:
    id: int
    text: str
    is_root: bool = False
    norm: str = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "norm", normalize_text(self.text))


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    relation: Relation
    effect: EffectType


@dataclass(frozen=True)
class StQuery:
    """A (context, situation, relation, effect) tuple plus its rendered surface.

    The surface string is a pure function of the four fields and the template
    that rendered it (see ``generation.build_query``).
    """

    context: str
    situation: str
    relation: Relation
    effect: EffectType
    surface: str


class AddResult(NamedTuple):
    """Outcome of ``StGraph.add_node``.

    ``node_id`` is the target node (existing or new). ``skipped`` names the
    reason the edge was not added ("cycle" or "duplicate-edge"), or None.
    """

    node_id: int
    created: bool
    edge_added: bool
    skipped: str | None


@dataclass(frozen=True)
class Violation:
    """One failed graph invariant, with the offending node or edge ids."""

    kind: str
    message: str
    ids: tuple = ()


class StGraph:
    """Mutable during construction, then treated as a value.

    Construction is single-writer; completed graphs are safe to share
    across threads read-only.
    """

    def __init__(self, context: str, situation: str):
        self.context = context
        self.situation = situation
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.provenance: list[dict] = []
        self._by_id: dict[int, Node] = {}
        self._by_norm: dict[str, int] = {}
        self._adj: dict[int, list[int]] = {}
        self._edge_keys: set[tuple[int, int, Relation, EffectType]] = set()
        root = Node(0, situation, is_root=True)
        if not root.norm:
            raise ValueError("situation must be non-empty after normalization")
        self._install_node(root)

    # -- construction ---------------------------------------------------

    def _install_node(self, node: Node) -> None:
        self.nodes.append(node)
        self._by_id[node.id] = node
        self._by_norm.setdefault(node.norm, node.id)
        self._adj.setdefault(node.id, [])

    def _next_id(self) -> int:
        # Loaded graphs may carry arbitrary ids; never reuse one.
        return max(self._by_id, default=-1) + 1

    def _install_edge(self, edge: Edge) -> None:
        self.edges.append(edge)
        self._adj.setdefault(edge.src, []).append(edge.dst)
        self._edge_keys.add((edge.src, edge.dst, edge.relation, edge.effect))

    def add_node(
        self,
        source_id: int,
        relation: Relation,
        effect: EffectType,
        target_text: str,
    ) -> AddResult:
        """Attach an influence edge, merging targets by normalized text.

        A target whose normalized text already names a node reuses that node.
        Edges that would duplicate an existing edge or close a directed cycle
        are skipped (the graph is unchanged), never raised: generation must be
        able to continue past a degenerate sample.
        """
        if source_id not in self._by_id:
            raise ValueError(f"unknown source node id {source_id}")
        norm = normalize_text(target_text)
        if not norm:
            raise ValueError("target text is empty after normalization")

        existing = self._by_norm.get(norm)
        if existing is None:
            node = Node(self._next_id(), target_text)
            self._install_node(node)
            self._install_edge(Edge(source_id, node.id, relation, effect))
            return AddResult(node.id, created=True, edge_added=True, skipped=None)

        key = (source_id, existing, relation, effect)
        if key in self._edge_keys:
            return AddResult(existing, False, False, skipped="duplicate-edge")
        if existing == source_id or self._reaches(existing, source_id):
            return AddResult(existing, False, False, skipped="cycle")
        self._install_edge(Edge(source_id, existing, relation, effect))
        return AddResult(existing, created=False, edge_added=True, skipped=None)

    def _reaches(self, start: int, goal: int) -> bool:
        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in self._adj.get(cur, ()):
                if nxt == goal:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return False

    # -- accessors ------------------------------------------------------

    @property
    def root(self) -> Node:
        for node in self.nodes:
            if node.is_root:
                return node
        raise ValueError("graph has no root node")

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    # -- analysis -------------------------------------------------------

    def validate(self) -> list[Violation]:
        """Return one descriptor per violated invariant; [] when well-formed."""
        out: list[Violation] = []
        roots = [n.id for n in self.nodes if n.is_root]
        if len(roots) != 1:
            out.append(
                Violation("root-count", f"expected 1 root, found {len(roots)}", tuple(roots))
            )
        empty = [n.id for n in self.nodes if not n.norm]
        if empty:
            out.append(Violation("empty-text", "nodes with empty normalized text", tuple(empty)))

        ids = {n.id for n in self.nodes}
        dangling = [
            (e.src, e.dst) for e in self.edges if e.src not in ids or e.dst not in ids
        ]
        if dangling:
            out.append(Violation("dangling-edge", "edge endpoints missing", tuple(dangling)))
        loops = [(e.src, e.dst) for e in self.edges if e.src == e.dst]
        if loops:
            out.append(Violation("self-loop", "edges with source == target", tuple(loops)))
        seen_keys = set()
        dupes = []
        for e in self.edges:
            key = (e.src, e.dst, e.relation, e.effect)
            if key in seen_keys:
                dupes.append((e.src, e.dst))
            seen_keys.add(key)
        if dupes:
            out.append(Violation("duplicate-edge", "repeated (src, dst, relation, effect)", tuple(dupes)))

        cycle_edges = self._cycle_edges(ids)
        if cycle_edges:
            out.append(Violation("cycle", "edges participating in a directed cycle", tuple(cycle_edges)))

        if len(roots) == 1:
            reachable = self._reachable_from(roots[0])
            orphans = tuple(sorted(ids - reachable))
            if orphans:
                out.append(Violation("unreachable", "nodes not reachable from the root", orphans))
        return out

    def _cycle_edges(self, ids: set[int]) -> list[tuple[int, int]]:
        # An edge lies on a cycle iff its target reaches back to its source.
        return [
            (e.src, e.dst)
            for e in self.edges
            if e.src in ids and e.dst in ids and self._reaches(e.dst, e.src)
        ]

    def _reachable_from(self, start: int) -> set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in self._adj.get(cur, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    def flatten(self) -> str:
        """Deterministic linearization used by the overlap metrics.

        Breadth-first from the root; within each frontier, edges sort by
        (relation name, effect kind with imminent first, insertion index);
        every edge renders as "<source> <relation> <effect> <target>" over
        normalized node text, clauses joined by " | ". Independent of node
        id assignment.
        """
        root = self.root
        if not self.edges:
            return root.norm
        indexed = list(enumerate(self.edges))
        clauses: list[str] = []
        frontier = [root.id]
        seen = {root.id}
        while frontier:
            in_frontier = set(frontier)
            out_edges = [
                e
                for _, e in sorted(
                    ((i, e) for i, e in indexed if e.src in in_frontier),
                    key=lambda pair: (
                        pair[1].relation.value,
                        _EFFECT_ORDER[pair[1].effect],
                        pair[0],
                    ),
                )
            ]
            nxt: list[int] = []
            for e in out_edges:
                src = self._by_id[e.src]
                dst = self._by_id[e.dst]
                clauses.append(f"{src.norm} {e.relation.value} {e.effect.value} {dst.norm}")
                if e.dst not in seen:
                    seen.add(e.dst)
                    nxt.append(e.dst)
            frontier = nxt
        return " | ".join(clauses)

    def paths_of_length_two(self) -> list[tuple[Node, Node, Node, Relation, Relation]]:
        """All ordered (A, B, C) with edges A->B and B->C, plus both relations."""
        by_src: dict[int, list[Edge]] = {}
        for e in self.edges:
            by_src.setdefault(e.src, []).append(e)
        out = []
        for e1 in self.edges:
            for e2 in by_src.get(e1.dst, ()):
                out.append(
                    (
                        self._by_id[e1.src],
                        self._by_id[e1.dst],
                        self._by_id[e2.dst],
                        e1.relation,
                        e2.relation,
                    )
                )
        return out

    # -- export ---------------------------------------------------------

    def to_dot(self) -> str:
        """DOT digraph; positive edges color=green, negative color=red."""
        lines = ["digraph stgraph {"]
        for node in self.nodes:
            lines.append(f'  n{node.id} [label="{_dot_escape(node.text)}"];')
        for e in self.edges:
            color = "green" if e.relation.polarity is Polarity.POSITIVE else "red"
            label = f"{e.relation.value} {e.effect.value}"
            lines.append(f'  n{e.src} -> n{e.dst} [label="{label}", color={color}];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        """Canonical JSON: keys sorted, UTF-8 text, LF newline, bit-stable."""
        payload = {
            "context": self.context,
            "situation": self.situation,
            "nodes": [
                {"id": n.id, "text": n.text, "root": n.is_root} for n in self.nodes
            ],
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "relation": e.relation.value,
                    "effect": e.effect.value,
                }
                for e in self.edges
            ],
            "provenance": self.provenance,
        }
        return (
            json.dumps(
                payload,
                sort_keys=True,
                ensure_ascii=False,
                separators=(",", ":"),
                allow_nan=False,
            )
            + "\n"
        )

    @classmethod
    def from_json(cls, text: str) -> "StGraph":
        """Load a graph verbatim; invariants are NOT enforced (use validate)."""
        payload = json.loads(text)
        graph = cls.__new__(cls)
        graph.context = payload["context"]
        graph.situation = payload["situation"]
        graph.nodes = []
        graph.edges = []
        graph.provenance = list(payload.get("provenance", []))
        graph._by_id = {}
        graph._by_norm = {}
        graph._adj = {}
        graph._edge_keys = set()
        for rec in payload["nodes"]:
            graph._install_node(Node(rec["id"], rec["text"], bool(rec.get("root", False))))
        for rec in payload["edges"]:
            graph._install_edge(
                Edge(rec["src"], rec["dst"], Relation(rec["relation"]), EffectType(rec["effect"]))
            )
        return graph


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def node_text_multiset(graph: StGraph) -> dict[str, int]:
    """Normalized node texts with multiplicities, for graph comparisons."""
    out: dict[str, int] = {}
    for node in graph.nodes:
        out[node.norm] = out.get(node.norm, 0) + 1
    return out


def edge_label_multiset(graph: StGraph) -> dict[tuple[str, str], int]:
    """(relation, effect) labels with multiplicities, for graph comparisons."""
    out: dict[tuple[str, str], int] = {}
    for e in graph.edges:
        key = (e.relation.value, e.effect.value)
        out[key] = out.get(key, 0) + 1
    return out
