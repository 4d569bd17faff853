"""Max-throughput partitioning of a computation graph along a topological order.

Block cost of a node set S (all times in the graph's abstract units)::

    f(S) = in_bytes(S)/B + work(S) + overflow(S) + out_bytes(S)/B

where ``in_bytes`` counts each outside producer feeding S once, and
``out_bytes`` counts each node of S whose output is consumed outside S once.

Every sum of annotations is rounded exactly once (``math.fsum`` on the
from-scratch path, exact integer prefix sums on the incremental path), so the
segment oracle and :func:`block_cost` agree bit for bit and the dynamic program
can be checked against brute force with ``==``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .compgraph import CompGraph, is_topological, kahn_topo_sort
from .errors import InvalidBudget, TooLarge, ValidationError

CLAMPED = "clamped"
STRICT_PAPER = "strict-paper"
OVERFLOW_MODES = (CLAMPED, STRICT_PAPER)


@dataclass(frozen=True)
class MemorySpec:
    """Fast-memory capacity ``M`` (bytes) and bandwidth ``B`` (bytes / time)."""

    M: float
    B: float

    def __post_init__(self):
        if not (self.B > 0 and math.isfinite(self.B)):
            raise ValidationError(f"bandwidth must be finite and > 0, got {self.B!r}")
        if not self.M >= 0:
            raise ValidationError(f"memory must be >= 0, got {self.M!r}")

    def to_dict(self):
        return {"M": self.M, "B": self.B}


# --- peak activation models -------------------------------------------------

class SingleOpLiveness:
    """peak(S) = max over v in S of sizeout(v) + sum of v's input sizes.

    Only one operator's inputs and output are assumed live at a time. The
    per-node values make the peak of a segment a running maximum.
    """

    def node_peaks(self, graph: CompGraph) -> dict:
        return {
            v: math.fsum([graph[v].sizeout] + [graph[u].sizeout for u in sorted(graph.preds(v))])
            for v in graph.node_ids
        }

    def peak(self, graph: CompGraph, S) -> float:
        peaks = self.node_peaks_cached(graph)
        return max((peaks[v] for v in S), default=0.0)

    def node_peaks_cached(self, graph):
        cache = getattr(self, "_cache", None)
        if cache is None or cache[0] is not graph:
            self._cache = (graph, self.node_peaks(graph))
        return self._cache[1]


DEFAULT_PEAK = SingleOpLiveness()


# --- cost model ---------------------------------------------------------------

def _check_disjoint(S, T):
    common = set(S) & set(T)
    if common:
        raise ValueError(f"S and T must be disjoint, both contain {sorted(common)}")


def io_cost(graph: CompGraph, S, T, B: float) -> float:
    """(1/B) * total sizeout of producers in S consumed by some node of T."""
    S, T = set(S), set(T)
    _check_disjoint(S, T)
    producers = {u for v in T for u in graph.preds(v) if u in S}
    return math.fsum(graph[u].sizeout for u in sorted(producers)) / B


def _overflow(sp, pk, M, B, mode, reserved=0.0):
    if mode == CLAMPED:
        return max(0.0, sp + pk + reserved - M) / B
    if mode == STRICT_PAPER:
        return (sp + pk + reserved - M) + pk / B
    raise ValueError(f"unknown overflow mode {mode!r}")


def overflow_cost(graph: CompGraph, S, mem: MemorySpec, mode: str = CLAMPED,
                  peak_model=DEFAULT_PEAK, reserved: float = 0.0) -> float:
    """Time spent streaming parameters that do not fit in fast memory.

    ``reserved`` bytes (e.g. a KV cache) are held in fast memory alongside
    the block and count against ``mem.M``.
    """
    S = set(S)
    if not S:
        raise ValueError("overflow_cost needs a non-empty node set")
    sp = math.fsum(graph[v].sizeparam for v in sorted(S))
    pk = peak_model.peak(graph, S)
    return _overflow(sp, pk, mem.M, mem.B, mode, reserved)


def block_cost(graph: CompGraph, S, mem: MemorySpec, mode: str = CLAMPED,
               peak_model=DEFAULT_PEAK, reserved: float = 0.0) -> float:
    S = set(S)
    if not S:
        raise ValueError("block_cost needs a non-empty node set")
    rest = set(graph.node_ids) - S
    incoming = io_cost(graph, rest, S, mem.B)
    work = math.fsum(graph[v].work for v in sorted(S))
    over = overflow_cost(graph, S, mem, mode, peak_model, reserved)
    outgoing = io_cost(graph, S, rest, mem.B)
    return incoming + work + over + outgoing


# --- partitions ----------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """Contiguous split of ``order``; ``cuts`` are prefix lengths (0 < c < n)."""

    order: tuple
    cuts: tuple
    bottleneck: float = float("nan")
    blocks: tuple = field(init=False)

    def __post_init__(self):
        order, cuts = tuple(self.order), tuple(int(c) for c in self.cuts)
        n = len(order)
        if any(b <= a for a, b in zip((0,) + cuts, cuts + (n,))):
            raise ValidationError(f"cuts {list(cuts)} are not strictly increasing inside (0, {n})")
        bounds = (0,) + cuts + (n,)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "cuts", cuts)
        object.__setattr__(self, "blocks", tuple(order[a:b] for a, b in zip(bounds, bounds[1:])))

    @property
    def k(self):
        return len(self.blocks)

    def to_dict(self, mem: Optional[MemorySpec] = None) -> dict:
        doc = {
            "order": list(self.order),
            "cuts": list(self.cuts),
            "blocks": [list(b) for b in self.blocks],
            "bottleneck": self.bottleneck,
        }
        if mem is not None:
            doc["mem"] = mem.to_dict()
        return doc


def bottleneck_cost(graph: CompGraph, partition: Partition, mem: MemorySpec,
                    mode: str = CLAMPED, peak_model=DEFAULT_PEAK) -> float:
    return max(block_cost(graph, b, mem, mode, peak_model) for b in partition.blocks)


def quotient_edges(graph: CompGraph, blocks) -> set:
    """Edges between block indices induced by ``graph``."""
    where = {v: i for i, b in enumerate(blocks) for v in b}
    return {(where[u], where[v]) for u, v in graph.edges if where[u] != where[v]}


def dumps_plan(partition: Partition, mem: MemorySpec) -> str:
    return json.dumps(partition.to_dict(mem), indent=2) + "\n"


def plan_from_dict(doc) -> tuple[Partition, Optional[MemorySpec]]:
    part = Partition(tuple(doc["order"]), tuple(doc["cuts"]), float(doc["bottleneck"]))
    if [list(b) for b in part.blocks] != [list(b) for b in doc.get("blocks", part.blocks)]:
        raise ValidationError("plan blocks disagree with order/cuts")
    mem = MemorySpec(**doc["mem"]) if "mem" in doc else None
    return part, mem


def load_plan(path) -> tuple[Partition, Optional[MemorySpec]]:
    with open(path, encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh))


# --- segment-cost oracle ----------------------------------------------------------

class _Exact:
    """Non-negative floats as integers over one power-of-two denominator."""

    def __init__(self, values):
        ratios = [float(v).as_integer_ratio() for v in values]
        self.den = max((d for _, d in ratios), default=1)
        ints = [num * (self.den // d) for num, d in ratios]
        small = sum(ints) < 2 ** 62 and self.den < 2 ** 1000
        self.dtype = np.int64 if small else object
        self.ints = np.array(ints, dtype=self.dtype)

    def zeros(self, n):
        return np.zeros(n, dtype=np.int64) if self.dtype is np.int64 else np.array([0] * n, dtype=object)

    def prefix(self):
        out = self.zeros(len(self.ints) + 1)
        out[1:] = np.cumsum(self.ints)
        return out

    def to_float(self, arr):
        if self.dtype is np.int64:
            return arr.astype(np.float64) / float(self.den)
        den = self.den
        return np.array([int(a) / den for a in arr], dtype=np.float64)


class SegmentCostOracle:
    """Costs of every contiguous segment ``order[lo:hi+1]`` (0-based, inclusive).

    ``table[lo, hi]`` holds the segment's block cost; entries with ``hi < lo``
    are ``inf``.
    """

    def __init__(self, order, table, mem, mode):
        self.order = tuple(order)
        self.table = table
        self.mem = mem
        self.mode = mode

    @property
    def n(self):
        return len(self.order)

    def query(self, lo: int, hi: int) -> float:
        if not 0 <= lo <= hi < self.n:
            raise IndexError(f"segment [{lo}, {hi}] outside 0..{self.n - 1}")
        return float(self.table[lo, hi])


def build_segment_cost(graph: CompGraph, order: Sequence[int], mem: MemorySpec,
                       mode: str = CLAMPED, peak_model=DEFAULT_PEAK,
                       reserved: float = 0.0) -> SegmentCostOracle:
    """Precompute all O(n^2) segment costs of ``order`` by sweeping segment ends."""
    order = list(order)
    if not is_topological(graph, order):
        raise ValidationError("order is not a topological order of the graph")
    if mode not in OVERFLOW_MODES:
        raise ValueError(f"unknown overflow mode {mode!r}")
    n = len(order)
    pos = {v: i for i, v in enumerate(order)}
    succ_pos = [sorted(pos[s] for s in graph.succs(v)) for v in order]
    pred_pos = [sorted(pos[u] for u in graph.preds(v)) for v in order]

    work = _Exact([graph[v].work for v in order])
    param = _Exact([graph[v].sizeparam for v in order])
    out = _Exact([graph[v].sizeout for v in order])
    work_pre, param_pre, out_pre = work.prefix(), param.prefix(), out.prefix()

    if hasattr(peak_model, "node_peaks"):
        node_peak = peak_model.node_peaks(graph)
        peaks = np.array([node_peak[v] for v in order], dtype=np.float64)
    else:
        peaks = None

    # Bytes leaving order[lo..hi]: the node's last consumer lies beyond hi.
    last_use = np.array([max(sp[-1], i) if sp else i for i, sp in enumerate(succ_pos)])
    out_rows = np.full((n, n), np.nan)
    hist = out.zeros(n)
    for lo in range(n - 1, -1, -1):
        hist[last_use[lo]] += out.ints[lo]
        alive = (out_pre[lo + 1:] - out_pre[lo]) - np.cumsum(hist[lo:])
        out_rows[lo, lo:] = out.to_float(alive)

    table = np.full((n, n), np.inf)
    B, M = mem.B, mem.M
    hist = out.zeros(n)
    cursor = [0] * n
    for lo in range(n):
        incoming = out.to_float(np.cumsum(hist[lo:]))
        w = work.to_float(work_pre[lo + 1:] - work_pre[lo])
        sp = param.to_float(param_pre[lo + 1:] - param_pre[lo])
        if peaks is not None:
            pk = np.maximum.accumulate(peaks[lo:])
        else:
            pk = np.array([peak_model.peak(graph, set(order[lo:hi + 1])) for hi in range(lo, n)])
        if mode == CLAMPED:
            over = np.maximum(0.0, sp + pk + reserved - M) / B
        else:
            over = (sp + pk + reserved - M) + pk / B
        table[lo, lo:] = incoming / B + w + over + out_rows[lo, lo:] / B

        # Advance to lo + 1: order[lo] becomes an outside producer, and its
        # own producers now first feed a later consumer.
        for u in pred_pos[lo]:
            hist[lo] -= out.ints[u]
            cursor[u] += 1
            if cursor[u] < len(succ_pos[u]):
                hist[succ_pos[u][cursor[u]]] += out.ints[u]
        if succ_pos[lo]:
            hist[succ_pos[lo][0]] += out.ints[lo]
    return SegmentCostOracle(order, table, mem, mode)


# --- slicing -----------------------------------------------------------------------

Adjustment = Callable[[np.ndarray, np.ndarray, int, int], np.ndarray]


def imbalance_penalty(factor: float) -> Adjustment:
    """Scale candidate costs by ``1 + factor * |len - n/k| / n`` for the new segment."""

    def adjust(values, seg_len, n, k):
        return values * (1.0 + factor * np.abs(seg_len - n / k) / n)

    return adjust


def _suffix_tables(Q, k):
    """S[j][lo]: best bottleneck for order[lo:] in at most j+1 blocks."""
    n = Q.shape[0]
    tables = [Q[:, n - 1].copy()]
    for _ in range(1, k):
        prev = tables[-1]
        if n > 1:
            split = np.maximum(Q[:, :-1], prev[None, 1:]).min(axis=1)
        else:
            split = np.full(n, np.inf)
        tables.append(np.minimum(prev, split))
    return tables


def slice_graph_dp(oracle: SegmentCostOracle, n: int, k: int,
                   adjust: Optional[Adjustment] = None) -> tuple[float, list]:
    """Split the oracle's order into at most ``k`` contiguous blocks minimising
    the largest segment cost.

    Forward recurrence over prefixes::

        best(r, 1)  = Q(0, r)
        best(r, k') = min_{l <= r} max(best(l - 1, k' - 1), Q(l, r))

    Returns ``(bottleneck, cuts)``; among optimal cut lists the
    lexicographically smallest is returned. ``adjust`` rescales candidate
    values inside the recurrence (identity when None).
    """
    if n != oracle.n:
        raise ValueError(f"n={n} does not match the oracle's {oracle.n} positions")
    if not 1 <= k <= n:
        raise InvalidBudget(f"block budget k={k} must lie in [1, {n}]")
    Q = oracle.table
    seg_len = None
    if adjust is not None:
        # seg_len[l - 1, r] = r - l + 1 for the segment starting at l.
        seg_len = (np.arange(n)[None, :] - np.arange(1, n)[:, None] + 1).astype(float)

    layers = [Q[0].copy()]
    for _ in range(2, k + 1):
        prev = layers[-1]
        if n > 1:
            cand = np.maximum(prev[:-1, None], Q[1:, :])
            if adjust is not None:
                cand = np.where(seg_len > 0, adjust(cand, seg_len, n, k), np.inf)
            split = cand.min(axis=0)
        else:
            split = np.full(n, np.inf)
        layers.append(np.minimum(prev, split))
    objective = float(layers[-1][n - 1])

    if adjust is None:
        cuts = _lex_smallest_cuts(Q, k, objective)
    else:
        cuts = _backtrack(Q, layers, adjust, seg_len, n, k)
    bounds = [0] + cuts + [n]
    bottleneck = max(float(Q[a, b - 1]) for a, b in zip(bounds, bounds[1:]))
    return (objective if adjust is None else bottleneck), cuts


def _lex_smallest_cuts(Q, k, target):
    n = Q.shape[0]
    suffix = _suffix_tables(Q, k)
    if suffix[k - 1][0] != target:
        raise AssertionError("forward and suffix recurrences disagree")
    cuts, lo, budget = [], 0, k
    while Q[lo, n - 1] > target:
        for m in range(lo, n - 1):
            if Q[lo, m] <= target and suffix[budget - 2][m + 1] <= target:
                cuts.append(m + 1)
                lo, budget = m + 1, budget - 1
                break
        else:
            raise AssertionError("no feasible cut found during reconstruction")
    return cuts


def _backtrack(Q, layers, adjust, seg_len, n, k):
    cuts, r, budget = [], n - 1, k
    while budget > 1:
        value = layers[budget - 1][r]
        if value == layers[budget - 2][r]:
            budget -= 1
            continue
        prev = layers[budget - 2]
        lo = np.arange(1, r + 1)
        cand = adjust(np.maximum(prev[lo - 1], Q[lo, r]), seg_len[lo - 1, r], n, k)
        l = int(lo[np.flatnonzero(cand == value)[0]])
        cuts.append(l)
        r, budget = l - 1, budget - 1
    return sorted(cuts)


def plan_partition(graph: CompGraph, k: int, mem: MemorySpec, order=None,
                   mode: str = CLAMPED, peak_model=DEFAULT_PEAK,
                   adjust: Optional[Adjustment] = None) -> Partition:
    """Kahn order (ascending-id ties) followed by the slicing DP."""
    order = kahn_topo_sort(graph) if order is None else list(order)
    oracle = build_segment_cost(graph, order, mem, mode, peak_model)
    bottleneck, cuts = slice_graph_dp(oracle, len(order), k, adjust)
    return Partition(tuple(order), tuple(cuts), bottleneck)


def brute_force_mtpp(graph: CompGraph, order: Sequence[int], k: int, mem: MemorySpec,
                     mode: str = CLAMPED, peak_model=DEFAULT_PEAK,
                     limit: int = 14) -> tuple[float, list]:
    """Exhaustive search over all splits of ``order`` into at most k blocks.

    Costs come from :func:`block_cost` on each block; ties resolve to the
    lexicographically smallest cut list.
    """
    order = list(order)
    n = len(order)
    if n > limit:
        raise TooLarge(f"brute force limited to {limit} nodes, got {n}")
    if k < 1:
        raise InvalidBudget(f"block budget k={k} must be >= 1")
    memo = {}

    def cost(a, b):
        if (a, b) not in memo:
            memo[a, b] = block_cost(graph, order[a:b], mem, mode, peak_model)
        return memo[a, b]

    best = None
    for m in range(min(k, n)):
        for cuts in itertools.combinations(range(1, n), m):
            bounds = (0,) + cuts + (n,)
            value = max(cost(a, b) for a, b in zip(bounds, bounds[1:]))
            cand = (value, list(cuts))
            if best is None or cand < best:
                best = cand
    return best
