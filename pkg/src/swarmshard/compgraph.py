"""Computation graphs of neural-network operators and their topological orders.

A graph is a DAG of :class:`OpNode` annotated with execution time, parameter
bytes and output bytes. Graphs are immutable once built; multi-edges collapse
into a single dependency.

Graph documents are JSON::

    {
      "nodes": [{"id": 0, "work": 3.0, "sizeparam": 0, "sizeout": 16}, ...],
      "edges": [[0, 1], [1, 2]]
    }

Unknown keys are rejected at both levels.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import CycleDetected, DanglingEdge, ParseError, ValidationError

NODE_FIELDS = ("id", "work", "sizeparam", "sizeout")
GRAPH_FIELDS = ("nodes", "edges")


@dataclass(frozen=True)
class OpNode:
    id: int
    work: float = 0.0
    sizeparam: float = 0.0
    sizeout: float = 0.0

    def __post_init__(self):
        if isinstance(self.id, bool) or not isinstance(self.id, int) or self.id < 0:
            raise ValidationError(f"node id must be a non-negative integer, got {self.id!r}")
        for name in ("work", "sizeparam", "sizeout"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"node {self.id}: {name} must be a number, got {value!r}")
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"node {self.id}: {name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))


class CompGraph:
    """Directed computation graph; edge ``(u, v)`` means v consumes u's output.

    Construction checks annotations and id uniqueness only. Call
    :func:`validate` (or use :func:`load_graph`) to reject cycles and dangling
    edges.
    """

    def __init__(self, nodes: Iterable[OpNode], edges: Iterable[Sequence[int]] = ()):
        byid: dict[int, OpNode] = {}
        for node in nodes:
            if node.id in byid:
                raise ValidationError(f"duplicate node id {node.id}")
            byid[node.id] = node
        self._nodes = dict(sorted(byid.items()))
        self._edges = frozenset((int(u), int(v)) for u, v in edges)
        self._preds: dict[int, set[int]] = {i: set() for i in self._nodes}
        self._succs: dict[int, set[int]] = {i: set() for i in self._nodes}
        for u, v in self._edges:
            if u in self._succs:
                self._succs[u].add(v)
            if v in self._preds:
                self._preds[v].add(u)
        self._node_ids = tuple(self._nodes)

    @classmethod
    def chain(cls, works, sizeparams=None, sizeouts=None) -> "CompGraph":
        """Linear graph 0 -> 1 -> ... -> n-1."""
        n = len(works)
        sizeparams = [0.0] * n if sizeparams is None else sizeparams
        sizeouts = [0.0] * n if sizeouts is None else sizeouts
        nodes = [OpNode(i, works[i], sizeparams[i], sizeouts[i]) for i in range(n)]
        return cls(nodes, [(i, i + 1) for i in range(n - 1)])

    @property
    def nodes(self) -> Mapping[int, OpNode]:
        return self._nodes

    @property
    def edges(self) -> frozenset:
        return self._edges

    @property
    def node_ids(self) -> tuple:
        """Node ids in ascending order."""
        return self._node_ids

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, node_id):
        return node_id in self._nodes

    def __getitem__(self, node_id) -> OpNode:
        return self._nodes[node_id]

    def __eq__(self, other):
        if not isinstance(other, CompGraph):
            return NotImplemented
        return self._nodes == other._nodes and self._edges == other._edges

    def __hash__(self):
        return hash((tuple(self._nodes.values()), self._edges))

    def __repr__(self):
        return f"CompGraph(n={len(self._nodes)}, m={len(self._edges)})"

    def preds(self, node_id) -> frozenset:
        return frozenset(self._preds[node_id])

    def succs(self, node_id) -> frozenset:
        return frozenset(self._succs[node_id])


def validate(graph: CompGraph) -> None:
    """Raise DanglingEdge or CycleDetected unless ``graph`` is a DAG."""
    for u, v in sorted(graph.edges):
        if u not in graph or v not in graph:
            raise DanglingEdge((u, v))
    cycle = _find_cycle(graph)
    if cycle is not None:
        raise CycleDetected(cycle)


def _find_cycle(graph: CompGraph):
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(graph.node_ids, WHITE)
    parent: dict[int, int] = {}
    for root in graph.node_ids:
        if color[root] != WHITE:
            continue
        color[root] = GREY
        stack = [(root, iter(sorted(graph.succs(root))))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                parent[nxt] = node
                stack.append((nxt, iter(sorted(graph.succs(nxt)))))
            elif color[nxt] == GREY:
                cycle = [node]
                while cycle[-1] != nxt:
                    cycle.append(parent[cycle[-1]])
                cycle.reverse()
                return cycle + [nxt]
    return None


def kahn_topo_sort(graph: CompGraph, priority=None) -> list[int]:
    """Topological order by Kahn's algorithm.

    Among ready nodes the highest ``priority`` goes first, ties by ascending
    id; without priorities the smallest id goes first. ``priority`` is either
    a mapping ``id -> value`` or a sequence aligned with ``graph.node_ids``.
    """
    if priority is None:
        key = dict.fromkeys(graph.node_ids, 0.0)
    elif isinstance(priority, Mapping):
        key = {i: float(priority[i]) for i in graph.node_ids}
    else:
        values = list(priority)
        if len(values) != len(graph):
            raise ValueError(f"priority has {len(values)} entries for {len(graph)} nodes")
        key = {i: float(p) for i, p in zip(graph.node_ids, values)}

    indeg = {i: len(graph.preds(i)) for i in graph.node_ids}
    ready = [(-key[i], i) for i in graph.node_ids if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, node = heapq.heappop(ready)
        order.append(node)
        for s in graph.succs(node):
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, (-key[s], s))
    if len(order) != len(graph):
        raise CycleDetected(_find_cycle(graph) or [])
    return order


def is_topological(graph: CompGraph, order: Sequence[int]) -> bool:
    if sorted(order) != list(graph.node_ids):
        return False
    pos = {v: i for i, v in enumerate(order)}
    return all(pos[u] < pos[v] for u, v in graph.edges)


# --- documents -------------------------------------------------------------

def graph_to_dict(graph: CompGraph) -> dict:
    return {
        "nodes": [
            {"id": n.id, "work": n.work, "sizeparam": n.sizeparam, "sizeout": n.sizeout}
            for n in graph.nodes.values()
        ],
        "edges": [[u, v] for u, v in sorted(graph.edges)],
    }


def dumps_graph(graph: CompGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2) + "\n"


def graph_from_dict(doc) -> CompGraph:
    if not isinstance(doc, dict):
        raise ParseError("graph document must be an object")
    unknown = sorted(set(doc) - set(GRAPH_FIELDS))
    if unknown:
        raise ParseError(f"unknown fields {unknown}", field=unknown[0])
    for name in GRAPH_FIELDS:
        if name not in doc:
            raise ParseError("missing required field", field=name)
    if not isinstance(doc["nodes"], list):
        raise ParseError("expected a list", field="nodes")
    if not isinstance(doc["edges"], list):
        raise ParseError("expected a list", field="edges")

    nodes = []
    for i, entry in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(entry, dict):
            raise ParseError("expected an object", field=where)
        unknown = sorted(set(entry) - set(NODE_FIELDS))
        if unknown:
            raise ParseError(f"unknown fields {unknown}", field=f"{where}.{unknown[0]}")
        for name in NODE_FIELDS:
            if name not in entry:
                raise ParseError("missing required field", field=f"{where}.{name}")
        values = [entry[name] for name in ("work", "sizeparam", "sizeout")]
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in values):
            raise ParseError("annotations must be numbers", field=where)
        try:
            nodes.append(OpNode(entry["id"], *values))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None

    edges = []
    for i, pair in enumerate(doc["edges"]):
        ok = (isinstance(pair, list) and len(pair) == 2
              and all(isinstance(x, int) and not isinstance(x, bool) for x in pair))
        if not ok:
            raise ParseError("edge must be a pair of integer ids", field=f"edges[{i}]")
        edges.append((pair[0], pair[1]))

    graph = CompGraph(nodes, edges)
    validate(graph)
    return graph


def loads_graph(text: str) -> CompGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return graph_from_dict(doc)


def load_graph(path) -> CompGraph:
    with open(path, encoding="utf-8") as fh:
        return loads_graph(fh.read())


def save_graph(graph: CompGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_graph(graph))


def random_dag(rng, n, edge_prob=0.3, max_work=10.0, max_param=20.0, max_out=10.0,
               integer=False) -> CompGraph:
    """Random DAG on ids 0..n-1 whose edges go from a random permutation's
    earlier to later entries (so ascending id is not always topological)."""
    perm = list(rng.permutation(n))

    def draw(hi):
        return float(rng.integers(0, int(hi) + 1)) if integer else float(rng.uniform(0, hi))

    nodes = [OpNode(i, draw(max_work), draw(max_param), draw(max_out)) for i in range(n)]
    edges = [(int(perm[a]), int(perm[b])) for a in range(n) for b in range(a + 1, n)
             if rng.random() < edge_prob]
    return CompGraph(nodes, edges)
