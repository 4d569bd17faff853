"""Persistent homology of swarm topologies and schema selection.

The swarm is turned into a finite metric (shortest paths over link weights
``latency + lam / bandwidth``), from which a Vietoris-Rips filtration is
built: vertices at 0, an edge at its length, a triangle at its longest edge.
Edge scale is the full distance, not the radius.

H0 comes from union-find, H1 from boundary-matrix reduction over Z/2. A
schema library maps reference diagrams to stored partition plans, and the
nearest reference under bottleneck distance wins.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, shortest_path

from .errors import (DisconnectedNetwork, EmptyLibrary, InfiniteBarMismatch,
                     InvalidFiltration, TooManyPoints, ValidationError, ZeroDimensional)
from .network import NetworkState
from .partition import load_plan

INF = math.inf


@dataclass(frozen=True)
class MetricGraph:
    ids: tuple
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        n = len(self.ids)
        if d.shape != (n, n):
            raise ValidationError(f"distance matrix shape {d.shape} does not match {n} ids")
        if np.any(np.diag(d) != 0) or not np.array_equal(d, d.T) or np.any(d < 0):
            raise ValidationError("distances must be symmetric, non-negative, zero on the diagonal")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "dist", d)

    def __len__(self):
        return len(self.ids)


def build_metric(network: NetworkState, lam: float = 1.0) -> MetricGraph:
    ids = network.ids
    index = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    weights = np.full((n, n), np.inf)
    for (u, v), link in network.links.items():
        w = link.latency + lam / link.bandwidth
        weights[index[u], index[v]] = weights[index[v], index[u]] = w
    np.fill_diagonal(weights, np.inf)
    graph = csgraph_from_dense(weights, null_value=np.inf)
    count, labels = connected_components(graph, directed=False)
    if count > 1:
        groups = [[ids[i] for i in range(n) if labels[i] == c] for c in range(count)]
        raise DisconnectedNetwork(groups)
    dist = shortest_path(graph, method="D", directed=False)
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return MetricGraph(ids, dist)


@dataclass(frozen=True, order=True)
class Simplex:
    value: float
    vertices: tuple

    @property
    def dim(self):
        return len(self.vertices) - 1

    def sort_key(self):
        return (self.value, self.dim, self.vertices)


def rips_filtration(metric: MetricGraph, max_dim: int = 2, max_value: float = INF) -> list:
    """Vietoris-Rips simplices up to ``max_dim`` sorted by (value, dim, vertices)."""
    if max_dim not in (0, 1, 2):
        raise ValueError("max_dim must be 0, 1 or 2")
    ids, d = metric.ids, metric.dist
    n = len(ids)
    out = [Simplex(0.0, (v,)) for v in ids]
    if max_dim >= 1:
        for i, j in itertools.combinations(range(n), 2):
            if d[i, j] <= max_value:
                out.append(Simplex(float(d[i, j]), tuple(sorted((ids[i], ids[j])))))
    if max_dim >= 2:
        for i, j, k in itertools.combinations(range(n), 3):
            value = max(d[i, j], d[i, k], d[j, k])
            if value <= max_value:
                out.append(Simplex(float(value), tuple(sorted((ids[i], ids[j], ids[k])))))
    out.sort(key=Simplex.sort_key)
    return out


# --- diagrams -------------------------------------------------------------------

@dataclass
class PersistenceDiagram:
    """(birth, death) pairs per homology dimension; ``death`` may be inf."""

    bars: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for dim, pairs in self.bars.items():
            arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
            if np.any(arr[:, 0] > arr[:, 1]):
                raise ValidationError("every bar needs birth <= death")
            clean[int(dim)] = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
        self.bars = clean

    def __getitem__(self, dim) -> np.ndarray:
        return self.bars.get(dim, np.empty((0, 2)))

    def finite(self, dim) -> np.ndarray:
        arr = self[dim]
        return arr[np.isfinite(arr[:, 1])]

    def infinite(self, dim) -> np.ndarray:
        arr = self[dim]
        return arr[~np.isfinite(arr[:, 1])]

    def merged(self, other: "PersistenceDiagram") -> "PersistenceDiagram":
        bars = {d: self[d] for d in self.bars}
        for d in other.bars:
            bars[d] = np.vstack([bars.get(d, np.empty((0, 2))), other[d]])
        return PersistenceDiagram(bars)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dim", "birth", "death"])
        for dim in sorted(self.bars):
            for b, d in self.bars[dim]:
                writer.writerow([dim, repr(float(b)), "inf" if math.isinf(d) else repr(float(d))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PersistenceDiagram":
        rows = list(csv.DictReader(io.StringIO(text)))
        bars: dict = {}
        for row in rows:
            bars.setdefault(int(row["dim"]), []).append((float(row["birth"]), float(row["death"])))
        return cls(bars)

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        dims = set(self.bars) | set(other.bars)
        return all(np.array_equal(self[d], other[d]) for d in dims)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}
        self.members = {x: [x] for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def _sorted_edges(metric):
    ids, d = metric.ids, metric.dist
    edges = [(float(d[i, j]), ids[i], ids[j]) for i, j in itertools.combinations(range(len(ids)), 2)]
    edges.sort()
    return edges


def compute_ph0(metric: MetricGraph) -> PersistenceDiagram:
    """H0 bars from Kruskal-style merging; all components are born at 0."""
    uf = _UnionFind(metric.ids)
    deaths = []
    for value, u, v in _sorted_edges(metric):
        ru, rv = uf.find(u), uf.find(v)
        if ru != rv:
            young, old = max(ru, rv), min(ru, rv)
            uf.parent[young] = old
            deaths.append(value)
    components = len({uf.find(v) for v in metric.ids})
    bars = [(0.0, d) for d in deaths] + [(0.0, INF)] * components
    return PersistenceDiagram({0: bars})


def component_lifetimes(metric: MetricGraph) -> dict:
    """Scale at which each node's component is absorbed by a larger one.

    On a merge the component with more members survives (ties: the one
    holding the smallest id), and every member of the absorbed component
    gets the merge scale. Members of the final component get inf. The
    values are exactly the H0 death values of :func:`compute_ph0`.
    """
    uf = _UnionFind(metric.ids)
    lifetime = {}
    for value, u, v in _sorted_edges(metric):
        ru, rv = uf.find(u), uf.find(v)
        if ru == rv:
            continue
        a, b = uf.members[ru], uf.members[rv]
        if (len(a), -min(a)) < (len(b), -min(b)):
            ru, rv, a, b = rv, ru, b, a
        for x in b:
            lifetime[x] = value
        uf.parent[rv] = ru
        a.extend(b)
        del uf.members[rv]
    for x in metric.ids:
        lifetime.setdefault(x, INF)
    return lifetime


@dataclass
class Reduction:
    """Outcome of reducing a filtration's boundary matrix over Z/2."""

    simplices: list
    columns: list          # reduced boundary column of each simplex (int bitmask)
    pivot_of: dict         # lowest face index -> column index that owns it
    pairs: list            # (birth index, death index)
    essential: list        # indices of simplices creating never-killed classes

    def bars(self, dim, keep_zero=False):
        out = []
        for i, j in self.pairs:
            if self.simplices[i].dim == dim:
                b, d = self.simplices[i].value, self.simplices[j].value
                if keep_zero or d > b:
                    out.append((b, d))
        out += [(self.simplices[i].value, INF) for i in self.essential if self.simplices[i].dim == dim]
        return out

    def betti(self, dim):
        return sum(1 for i in self.essential if self.simplices[i].dim == dim)


def reduce_filtration(filtration: Sequence[Simplex]) -> Reduction:
    simplices = list(filtration)
    index = {}
    for j, s in enumerate(simplices):
        if s.vertices in index:
            raise InvalidFiltration(f"simplex {s.vertices} appears twice")
        index[s.vertices] = j
    columns, pivot_of, pairs = [], {}, []
    for j, s in enumerate(simplices):
        col = 0
        if s.dim > 0:
            for face in itertools.combinations(s.vertices, s.dim):
                i = index.get(face)
                if i is None or i > j:
                    raise InvalidFiltration(f"face {face} of {s.vertices} does not precede it")
                if simplices[i].value > s.value:
                    raise InvalidFiltration(f"face {face} enters after its coface {s.vertices}")
                col |= 1 << i
        while col:
            low = col.bit_length() - 1
            owner = pivot_of.get(low)
            if owner is None:
                pivot_of[low] = j
                pairs.append((low, j))
                break
            col ^= columns[owner]
        columns.append(col)
    paired = {i for p in pairs for i in p}
    essential = [j for j in range(len(simplices)) if columns[j] == 0 and j not in paired]
    return Reduction(simplices, columns, pivot_of, pairs, essential)


def compute_ph1(filtration: Sequence[Simplex], verbose: bool = False) -> PersistenceDiagram:
    """H1 bars of a filtration; zero-length bars only when ``verbose``."""
    red = reduce_filtration(filtration)
    return PersistenceDiagram({1: red.bars(1, keep_zero=verbose)})


def homology_normal_form(chain: int, reduction: Reduction, dim: int = 1) -> int:
    """Canonical representative of ``chain`` modulo boundaries of (dim+1)-simplices.

    ``chain`` is a bitmask over filtration indices.
    """
    pivots = sorted((low for low, j in reduction.pivot_of.items()
                     if reduction.simplices[j].dim == dim + 1), reverse=True)
    for low in pivots:
        if chain >> low & 1:
            chain ^= reduction.columns[reduction.pivot_of[low]]
    return chain


def persistence(metric: MetricGraph, max_value: float = INF) -> PersistenceDiagram:
    """H0 and H1 of the Rips filtration of ``metric``."""
    return compute_ph0(metric).merged(compute_ph1(rips_filtration(metric, 2, max_value)))


def boundary(simplex) -> dict:
    """Oriented boundary: sum over i of (-1)^i times the face without vertex i.

    Returns ``{face: coefficient}``; accepts a :class:`Simplex` or a vertex tuple.
    """
    vertices = simplex.vertices if isinstance(simplex, Simplex) else tuple(simplex)
    if len(vertices) < 2:
        raise ZeroDimensional("a vertex has no boundary")
    out = {}
    for i in range(len(vertices)):
        face = vertices[:i] + vertices[i + 1:]
        out[face] = out.get(face, 0) + (-1) ** i
    return {f: c for f, c in out.items() if c}


def chain_boundary(chain: dict) -> dict:
    """Linear extension of :func:`boundary` to ``{oriented simplex: coefficient}``."""
    out = {}
    for simplex, coef in chain.items():
        for face, c in boundary(simplex).items():
            out[face] = out.get(face, 0) + coef * c
    return {f: c for f, c in out.items() if c}


# --- bottleneck distance -----------------------------------------------------------

def _has_perfect_matching(allowed):
    n = len(allowed)
    match_right = [-1] * n

    def augment(u, seen):
        for v in allowed[u]:
            if v not in seen:
                seen.add(v)
                if match_right[v] < 0 or augment(match_right[v], seen):
                    match_right[v] = u
                    return True
        return False

    return all(augment(u, set()) for u in range(n))


def _matching_cost_matrix(a, b):
    m, p = len(a), len(b)
    size = m + p
    cost = np.full((size, size), INF)
    for i in range(m):
        for j in range(p):
            cost[i, j] = max(abs(a[i, 0] - b[j, 0]), abs(a[i, 1] - b[j, 1]))
        cost[i, p + i] = (a[i, 1] - a[i, 0]) / 2
    for j in range(p):
        cost[m + j, j] = (b[j, 1] - b[j, 0]) / 2
    cost[m:, p:] = 0.0
    return cost


def bottleneck_distance(d1: PersistenceDiagram, d2: PersistenceDiagram, dim: int,
                        max_points: int = 12, strict: bool = False) -> float:
    """Bottleneck distance between the ``dim`` parts of two diagrams.

    Unmatched points go to the diagonal at half their persistence. Infinite
    bars are matched among themselves by birth; when their counts differ the
    distance is inf (or InfiniteBarMismatch with ``strict``).
    """
    inf1, inf2 = np.sort(d1.infinite(dim)[:, 0]), np.sort(d2.infinite(dim)[:, 0])
    if len(inf1) != len(inf2):
        if strict:
            raise InfiniteBarMismatch(f"{len(inf1)} vs {len(inf2)} infinite bars in H{dim}")
        return INF
    a, b = d1.finite(dim), d2.finite(dim)
    if max(len(a), len(b)) > max_points:
        raise TooManyPoints(f"diagrams limited to {max_points} finite points")
    floor = float(np.max(np.abs(inf1 - inf2))) if len(inf1) else 0.0
    if len(a) + len(b) == 0:
        return floor
    cost = _matching_cost_matrix(a, b)
    candidates = np.unique(cost[np.isfinite(cost)])
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        allowed = [np.flatnonzero(row <= candidates[mid]).tolist() for row in cost]
        if _has_perfect_matching(allowed):
            hi = mid
        else:
            lo = mid + 1
    return max(floor, float(candidates[lo]))


# --- schema library --------------------------------------------------------------

@dataclass(frozen=True)
class SchemaEntry:
    plan_id: str
    diagram: PersistenceDiagram
    plan_path: Optional[str] = None


@dataclass
class SchemaLibrary:
    entries: list

    def __len__(self):
        return len(self.entries)


def select_schema(library: SchemaLibrary, observed: PersistenceDiagram) -> str:
    """Plan id whose reference is nearest in H0, then H1, then lowest id."""
    if not library.entries:
        raise EmptyLibrary("schema library has no entries")
    scored = []
    for entry in library.entries:
        h0 = bottleneck_distance(entry.diagram, observed, 0)
        h1 = bottleneck_distance(entry.diagram, observed, 1)
        scored.append((h0, h1, entry.plan_id))
    return min(scored)[2]


def load_schema_library(directory) -> SchemaLibrary:
    """Read ``index.json`` -> ``{"entries": [{"plan_id", "diagram", "plan"}]}``.

    ``diagram`` and ``plan`` are file names relative to ``directory``; every
    plan must parse as a plan document.
    """
    with open(os.path.join(directory, "index.json"), encoding="utf-8") as fh:
        index = json.load(fh)
    entries = []
    for item in index["entries"]:
        plan_path = os.path.join(directory, item["plan"])
        load_plan(plan_path)
        with open(os.path.join(directory, item["diagram"]), encoding="utf-8") as fh:
            diagram = PersistenceDiagram.from_csv(fh.read())
        entries.append(SchemaEntry(str(item["plan_id"]), diagram, plan_path))
    return SchemaLibrary(entries)


def save_schema_library(directory, entries) -> None:
    """Write ``(plan_id, diagram, plan_document_text)`` triples as a library."""
    os.makedirs(directory, exist_ok=True)
    index = []
    for plan_id, diagram, plan_text in entries:
        dname, pname = f"{plan_id}.diagram.csv", f"{plan_id}.plan.json"
        with open(os.path.join(directory, dname), "w", encoding="utf-8") as fh:
            fh.write(diagram.to_csv())
        with open(os.path.join(directory, pname), "w", encoding="utf-8") as fh:
            fh.write(plan_text)
        index.append({"plan_id": plan_id, "diagram": dname, "plan": pname})
    with open(os.path.join(directory, "index.json"), "w", encoding="utf-8") as fh:
        json.dump({"entries": index}, fh, indent=2)
        fh.write("\n")
