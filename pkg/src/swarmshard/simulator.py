"""Pipeline simulation of a partitioned model running on a swarm.

Each stage ``s`` takes ``tau_s = compute_s + hop_s`` per micro-batch. The
orchestrator releases a micro-batch every ``period = max(tau)``, so no stage
ever queues. The first micro-batch needs ``sum(tau)`` (the fill latency) and
later ones finish one period apart.

Graph annotations describe a single sequence: per-stage compute at batch b
is ``t0 + batch_coeff * b`` and hop bytes scale with b.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

from .compgraph import CompGraph, OpNode
from .errors import InsufficientNodes, MismatchedCounts, ValidationError
from .network import NetworkState, NodeInfo, complete_network
from .partition import CLAMPED, MemorySpec, Partition, block_cost, plan_partition
from .routing import NodeFailure, RoutingParams, Swarm, form_swarm, rebalance


def kv_cache_per_token(head_dim: int, n_heads: int, n_layers: int) -> int:
    """Key plus value elements cached per token: 2 * head_dim * n_heads * n_layers."""
    for name, v in (("head_dim", head_dim), ("n_heads", n_heads), ("n_layers", n_layers)):
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise ValidationError(f"{name} must be a positive integer, got {v!r}")
    return 2 * int(head_dim) * int(n_heads) * int(n_layers)


@dataclass(frozen=True)
class ModelDims:
    head_dim: int
    n_heads: int
    n_layers: int


@dataclass(frozen=True)
class SessionSpec:
    tokens_to_generate: int
    batch_size: int = 1
    sequence_context: int = 1
    precision_bytes: int = 2
    model: ModelDims = ModelDims(1, 1, 1)

    def __post_init__(self):
        for name in ("tokens_to_generate", "batch_size", "sequence_context", "precision_bytes"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v!r}")


def kv_cache_bytes(spec: SessionSpec) -> int:
    m = spec.model
    return (kv_cache_per_token(m.head_dim, m.n_heads, m.n_layers)
            * spec.sequence_context * spec.batch_size * spec.precision_bytes)


@dataclass(frozen=True)
class Stage:
    node: int
    block: tuple
    compute_time: float
    hop_time: float
    kv_bytes: float = 0.0
    boundary_bytes: float = 0.0

    @property
    def period(self):
        return self.compute_time + self.hop_time


@dataclass(frozen=True)
class StagePlan:
    stages: tuple

    @property
    def period(self) -> float:
        return max(s.period for s in self.stages)

    @property
    def fill_latency(self) -> float:
        return sum(s.period for s in self.stages)

    @classmethod
    def from_times(cls, compute, hops=None):
        hops = [0.0] * len(compute) if hops is None else hops
        return cls(tuple(Stage(i, (), float(c), float(h)) for i, (c, h) in enumerate(zip(compute, hops))))


def boundary_bytes(graph: CompGraph, partition: Partition) -> list:
    """Bytes crossing each cut: outputs of earlier blocks used by later ones."""
    where = {v: i for i, b in enumerate(partition.blocks) for v in b}
    out = []
    for cut in range(partition.k - 1):
        producers = {u for u, v in graph.edges if where[u] <= cut < where[v]}
        out.append(math.fsum(graph[u].sizeout for u in sorted(producers)))
    return out


def build_stage_plan(graph: CompGraph, partition: Partition, swarm: Swarm, network: NetworkState,
                     spec: SessionSpec, mem: MemorySpec, batch_coeff: float = 0.0,
                     mode: str = CLAMPED) -> StagePlan:
    """One stage per (block, node). Stage compute is the block cost under the
    node's own fast memory (``node.memory`` or ``mem.M``) with the stage's
    share of the KV cache held resident; share follows parameter bytes."""
    if partition.k != swarm.p:
        raise MismatchedCounts(f"{partition.k} blocks for {swarm.p} swarm nodes")
    kv_total = kv_cache_bytes(spec)
    params = [math.fsum(graph[v].sizeparam for v in b) for b in partition.blocks]
    total_params = math.fsum(params)
    crossing = boundary_bytes(graph, partition)
    stages = []
    for i, (block, node) in enumerate(zip(partition.blocks, swarm.sequence)):
        info = network.nodes[node]
        node_mem = MemorySpec(mem.M if info.memory is None else info.memory, mem.B)
        share = params[i] / total_params if total_params > 0 else len(block) / len(graph)
        kv = kv_total * share
        t0 = block_cost(graph, block, node_mem, mode, reserved=kv)
        compute = t0 + batch_coeff * spec.batch_size
        hop, nbytes = 0.0, 0.0
        if i + 1 < swarm.p:
            link = network.link(node, swarm.sequence[i + 1])
            if link is None:
                raise ValidationError(f"no link between {node} and {swarm.sequence[i + 1]}")
            nbytes = crossing[i] * spec.batch_size
            hop = nbytes / link.bandwidth + link.latency
        stages.append(Stage(node, tuple(block), compute, hop, kv, nbytes))
    return StagePlan(tuple(stages))


@dataclass
class SessionTrace:
    events: list = field(default_factory=list)      # (time, stage, kind)
    completions: list = field(default_factory=list)  # (time, tokens)
    tokens_requested: int = 0
    period: float = float("nan")
    fill_latency: float = float("nan")
    total_time: float = 0.0
    downtime: float = 0.0
    aborted: bool = False
    swarm: tuple = ()
    segment_start: int = 0   # first completion of the current (post-recovery) run
    batch_size: int = 1

    @property
    def tokens_completed(self) -> int:
        return sum(t for _, t in self.completions)

    @property
    def tokens_per_second(self) -> float:
        """Steady-state rate from the spacing of completed micro-batches.

        Only the current run counts, so a recovered session reports the rate
        of the repaired swarm.
        """
        done = self.completions[self.segment_start:]
        if len(done) >= 2 and done[-1][0] > done[0][0]:
            return self.batch_size * (len(done) - 1) / (done[-1][0] - done[0][0])
        if done and self.period > 0:
            return self.batch_size / self.period
        return 0.0

    def events_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "stage", "kind"])
        for t, s, kind in self.events:
            writer.writerow([repr(float(t)), s, kind])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "tokens_per_second": self.tokens_per_second,
            "overall_tokens_per_second": (self.tokens_completed / self.total_time
                                          if self.total_time > 0 else None),
            "total_time": self.total_time,
            "downtime": self.downtime,
            "period": self.period,
            "micro_steps_per_second": (1.0 / self.period) if self.period > 0 else None,
            "fill_latency": self.fill_latency,
            "tokens_requested": self.tokens_requested,
            "tokens_completed": self.tokens_completed,
            "aborted": self.aborted,
            "swarm": list(self.swarm),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def simulate(plan: StagePlan, spec: SessionSpec, start_time: float = 0.0) -> SessionTrace:
    b = spec.batch_size
    n_batches = math.ceil(spec.tokens_to_generate / b)
    period = plan.period
    offsets = [0.0]
    for s in plan.stages:
        offsets.append(offsets[-1] + s.period)
    trace = SessionTrace(tokens_requested=spec.tokens_to_generate, period=period,
                         fill_latency=offsets[-1], batch_size=b,
                         swarm=tuple(s.node for s in plan.stages))
    remaining = spec.tokens_to_generate
    last = len(plan.stages) - 1
    for j in range(n_batches):
        release = start_time + j * period
        for idx, stage in enumerate(plan.stages):
            t = release + offsets[idx]
            trace.events.append((t, idx, "compute_start"))
            trace.events.append((t + stage.compute_time, idx, "compute_end"))
            if idx < last:
                trace.events.append((release + offsets[idx + 1], idx, "hop_end"))
        done = release + offsets[-1]
        tokens = min(b, remaining)
        remaining -= tokens
        trace.events.append((done, last, "tokens_out"))
        trace.completions.append((done, tokens))
    trace.events.sort(key=lambda e: (e[0], e[1]))
    trace.total_time = trace.completions[-1][0] if trace.completions else start_time
    return trace


@dataclass(frozen=True)
class SessionContext:
    graph: CompGraph
    partition: Partition
    swarm: Swarm
    network: NetworkState
    spec: SessionSpec
    mem: MemorySpec
    params: RoutingParams = RoutingParams()
    downtime: float = 5.0
    batch_coeff: float = 0.0
    mode: str = CLAMPED

    def plan(self, swarm=None, network=None, spec=None) -> StagePlan:
        return build_stage_plan(self.graph, self.partition, swarm or self.swarm,
                                network or self.network, spec or self.spec, self.mem,
                                self.batch_coeff, self.mode)

    def run(self) -> SessionTrace:
        return simulate(self.plan(), self.spec)


def inject_failure(context: SessionContext, node_id, at_time: float) -> SessionTrace:
    """Fail ``node_id`` at ``at_time``, rebalance, and finish the session.

    Micro-batches completed by ``at_time`` are kept; the rest restart on the
    repaired swarm after the downtime penalty.
    """
    if node_id not in context.swarm.sequence:
        raise ValueError(f"node {node_id} is not in the swarm")
    first = context.run()
    if at_time >= first.total_time:
        return first
    position = context.swarm.sequence.index(node_id)
    kept = SessionTrace(
        events=[e for e in first.events if e[0] < at_time],
        completions=[c for c in first.completions if c[0] < at_time],
        tokens_requested=context.spec.tokens_to_generate,
        period=first.period, fill_latency=first.fill_latency,
        swarm=context.swarm.sequence, batch_size=context.spec.batch_size,
    )
    kept.events.append((at_time, position, "failure"))
    network = context.network.without(node_id)
    try:
        swarm = rebalance(context.swarm, network, context.params, NodeFailure(node_id))
    except InsufficientNodes as exc:
        kept.aborted = True
        kept.total_time = at_time
        raise InsufficientNodes(str(exc), partial_trace=kept) from None

    resume = at_time + context.downtime
    kept.events.append((resume, position, "rebalanced"))
    remaining = context.spec.tokens_to_generate - kept.tokens_completed
    rest = simulate(context.plan(swarm, network, replace(context.spec, tokens_to_generate=remaining)),
                    replace(context.spec, tokens_to_generate=remaining), start_time=resume)
    return SessionTrace(
        events=kept.events + rest.events,
        completions=kept.completions + rest.completions,
        tokens_requested=context.spec.tokens_to_generate,
        period=rest.period, fill_latency=rest.fill_latency,
        total_time=rest.total_time, downtime=context.downtime, batch_size=rest.batch_size,
        swarm=swarm.sequence, segment_start=len(kept.completions),
    )


def transformer_chain(n_layers: int, layer_work: float, layer_params: float,
                      activation_bytes: float) -> CompGraph:
    """Embedding, ``n_layers`` identical blocks and a head, as a linear graph."""
    nodes = [OpNode(0, layer_work * 0.1, layer_params * 0.5, activation_bytes)]
    nodes += [OpNode(i, layer_work, layer_params, activation_bytes) for i in range(1, n_layers + 1)]
    nodes.append(OpNode(n_layers + 1, layer_work * 0.1, layer_params * 0.5, activation_bytes))
    return CompGraph(nodes, [(i, i + 1) for i in range(n_layers + 1)])


def reference_context(bandwidth: float = 1.25e8, batch_size: int = 1, tokens: int = 256,
                      batch_coeff: float = 2e-5, latency: float = 0.01,
                      n_nodes: int = 5, shards: int = 4) -> SessionContext:
    """Rough 8B-parameter decoder spread over consumer GPUs on an internet swarm.

    Units are seconds and bytes: 32 layers of ~436 MB (16-bit) at ~0.5 ms
    per decode step, 8 KB activations per sequence, 24 GB cards, and
    ``bandwidth`` bytes/s links (1.25e8 is 1 Gbit/s). Meant for trend
    comparisons only; absolute numbers are not calibrated.
    """
    graph = transformer_chain(32, 5e-4, 4.36e8, 8192.0)
    mem = MemorySpec(24e9, 2.5e10)
    nodes = [NodeInfo(i, 24.0, 0.0, 1.0, 0.99, memory=24e9) for i in range(n_nodes)]
    network = complete_network(nodes, latency, bandwidth, payload=8192.0 * batch_size)
    partition = plan_partition(graph, shards, mem)
    params = RoutingParams()
    swarm = form_swarm(network, shards, params)
    spec = SessionSpec(tokens, batch_size, 2048, 2, ModelDims(128, 8, 32))
    return SessionContext(graph, partition, swarm, network, spec, mem, params,
                          batch_coeff=batch_coeff)
