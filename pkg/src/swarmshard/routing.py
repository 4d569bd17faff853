"""Node selection for swarm formation and rebalancing.

Cost of appending candidate A after a prefix of chosen nodes::

    sum over j in window  (D[j,A] / B[j,A] + L[j,A]) ** gamma
        + load(A) ** beta + (1 / (R(A) + 1)) ** alpha_rel

The window is the last ``context_alpha + 1`` prefix nodes. In the default
mode ``load = C/G`` and ``R = uptime``, so busier or less reliable nodes cost
more. ``strict-paper`` mode uses ``G/C`` and ``R = 1 - uptime``, which
rewards the opposite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .errors import InsufficientNodes, NoCandidates, OutOfRange, ValidationError
from .network import NetworkState

DEFAULT = "default"
STRICT_PAPER = "strict-paper"
MODES = (DEFAULT, STRICT_PAPER)


def reliability(uptime: float, mode: str = DEFAULT) -> float:
    if not 0.0 <= uptime <= 1.0:
        raise OutOfRange(f"uptime must lie in [0, 1], got {uptime!r}")
    if mode == DEFAULT:
        return uptime
    if mode == STRICT_PAPER:
        return 1.0 - uptime
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class Thresholds:
    """Eligibility floors for nodes and the hop into them.

    A swarm position violates when its node or its incoming link falls
    outside these bounds.
    """

    min_gpu: float = 0.0
    min_uptime: float = 0.0
    max_latency: float = math.inf
    min_bandwidth: float = 0.0


@dataclass(frozen=True)
class RoutingParams:
    gamma: float = 1.0
    beta: float = 1.0
    alpha_rel: float = 1.0
    context_alpha: int = 0
    mode: str = DEFAULT
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if min(self.gamma, self.beta, self.alpha_rel) <= 0:
            raise ValidationError("routing exponents must be > 0")
        if self.context_alpha < 0 or int(self.context_alpha) != self.context_alpha:
            raise ValidationError("context_alpha must be a non-negative integer")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")

    def with_exponents(self, gamma, beta, alpha_rel) -> "RoutingParams":
        return replace(self, gamma=gamma, beta=beta, alpha_rel=alpha_rel)


@dataclass(frozen=True)
class NodeMetrics:
    """Immutable per-node and per-pair routing inputs.

    ``gpu`` is free capacity G, ``load`` is C floored at a small positive
    value, ``boost`` multiplies the reliability derived from uptime.
    Pairs without a link have no bandwidth/latency and cost inf.
    """

    gpu: dict
    load: dict
    uptime: dict
    links: dict
    payload_default: float = 0.0
    payloads: dict = field(default_factory=dict)
    boost: dict = field(default_factory=dict)

    @classmethod
    def from_network(cls, network: NetworkState, payload: Optional[float] = None,
                     load_floor: float = 1e-9) -> "NodeMetrics":
        nodes = network.nodes.values()
        return cls(
            gpu={n.id: n.gpu_free for n in nodes},
            load={n.id: max(n.load, load_floor) for n in nodes},
            uptime={n.id: n.uptime for n in nodes},
            links={k: (l.bandwidth, l.latency) for k, l in network.links.items()},
            payload_default=network.payload if payload is None else float(payload),
        )

    @property
    def ids(self) -> tuple:
        return tuple(sorted(self.gpu))

    def link(self, j, a):
        return self.links.get((min(j, a), max(j, a)))

    def payload(self, j, a) -> float:
        return self.payloads.get((j, a), self.payload_default)

    def reliability(self, node, mode=DEFAULT) -> float:
        return min(1.0, reliability(self.uptime[node], mode) * self.boost.get(node, 1.0))

    def without(self, node) -> "NodeMetrics":
        keep = lambda d: {k: v for k, v in d.items() if k != node}
        return replace(self, gpu=keep(self.gpu), load=keep(self.load), uptime=keep(self.uptime),
                       links={k: v for k, v in self.links.items() if node not in k},
                       boost=keep(self.boost))


def as_metrics(network) -> NodeMetrics:
    return network if isinstance(network, NodeMetrics) else NodeMetrics.from_network(network)


@dataclass(frozen=True)
class CostTerms:
    transfer: float
    load: float
    reliability: float

    @property
    def total(self) -> float:
        return self.transfer + self.load + self.reliability


def node_cost_terms(candidate, prefix: Sequence, metrics: NodeMetrics, params: RoutingParams,
                    payload: Optional[float] = None, window: Optional[int] = None) -> CostTerms:
    if candidate in prefix:
        raise ValueError(f"candidate {candidate} already in the prefix")
    size = params.context_alpha + 1 if window is None else window
    transfer = 0.0
    for j in list(prefix)[-size:] if size else []:
        link = metrics.link(j, candidate)
        if link is None:
            transfer = math.inf
            break
        bandwidth, latency = link
        data = metrics.payload(j, candidate) if payload is None else payload
        transfer += (data / bandwidth + latency) ** params.gamma

    G, C = metrics.gpu[candidate], metrics.load[candidate]
    if params.mode == DEFAULT:
        load = math.inf if G <= 0 else (C / G) ** params.beta
    else:
        load = (G / C) ** params.beta
    R = metrics.reliability(candidate, params.mode)
    rel = (1.0 / (R + 1.0)) ** params.alpha_rel
    return CostTerms(transfer, load, rel)


def node_cost(candidate, prefix, metrics, params, payload=None) -> float:
    return node_cost_terms(candidate, prefix, metrics, params, payload).total


def _node_ok(node, metrics, params):
    t = params.thresholds
    return metrics.gpu[node] >= t.min_gpu and metrics.uptime[node] >= t.min_uptime


def _hop_ok(prev, node, metrics, params):
    if prev is None:
        return True
    link = metrics.link(prev, node)
    if link is None:
        return False
    bandwidth, latency = link
    t = params.thresholds
    return latency <= t.max_latency and bandwidth >= t.min_bandwidth


def eligible(metrics: NodeMetrics, params: RoutingParams) -> list:
    return [a for a in metrics.ids if _node_ok(a, metrics, params)]


def select_next(prefix: Sequence, available: Iterable, metrics: NodeMetrics,
                params: RoutingParams, payload: Optional[float] = None):
    """Cheapest admissible candidate, ties by ascending id."""
    prefix = list(prefix)
    taken = set(prefix)
    prev = prefix[-1] if prefix else None
    best = None
    for a in sorted(set(available) - taken):
        if a not in metrics.gpu or not _node_ok(a, metrics, params):
            continue
        if not _hop_ok(prev, a, metrics, params):
            continue
        cost = node_cost(a, prefix, metrics, params, payload)
        if math.isfinite(cost) and (best is None or cost < best[0]):
            best = (cost, a)
    if best is None:
        raise NoCandidates(f"no admissible candidate after prefix {prefix}")
    return best[1]


@dataclass(frozen=True)
class Swarm:
    sequence: tuple
    hops: tuple = ()

    def __post_init__(self):
        seq = tuple(self.sequence)
        if len(set(seq)) != len(seq):
            raise ValidationError(f"swarm repeats a node: {seq}")
        object.__setattr__(self, "sequence", seq)
        object.__setattr__(self, "hops", tuple(self.hops))

    @property
    def p(self):
        return len(self.sequence)

    def __iter__(self):
        return iter(self.sequence)

    def __getitem__(self, i):
        return self.sequence[i]

    def to_dict(self) -> dict:
        return {
            "sequence": list(self.sequence),
            "hops": [
                {"position": i, "node": node, "transfer": h.transfer, "load": h.load,
                 "reliability": h.reliability, "total": h.total}
                for i, (node, h) in enumerate(zip(self.sequence, self.hops))
            ],
            "total_cost": sum(h.total for h in self.hops),
        }


def _payload_at(hop_payloads, i):
    return None if hop_payloads is None else hop_payloads[i]


def _score(sequence, metrics, params, hop_payloads=None):
    return tuple(
        node_cost_terms(a, sequence[:i], metrics, params, _payload_at(hop_payloads, i))
        for i, a in enumerate(sequence)
    )


def form_swarm(network, p: int, params: RoutingParams,
               hop_payloads: Optional[Sequence[float]] = None) -> Swarm:
    """Greedy windowed argmin, one node per shard.

    ``hop_payloads[i]`` (bytes entering shard i) overrides the metrics'
    payload for position i.
    """
    metrics = as_metrics(network)
    pool = eligible(metrics, params)
    if p < 1:
        raise ValidationError("shard count p must be >= 1")
    if len(pool) < p:
        raise InsufficientNodes(f"need {p} eligible nodes, have {len(pool)}")
    sequence = []
    for i in range(p):
        try:
            sequence.append(select_next(sequence, pool, metrics, params, _payload_at(hop_payloads, i)))
        except NoCandidates as exc:
            raise InsufficientNodes(f"could not fill position {i}: {exc}") from None
    return Swarm(tuple(sequence), _score(sequence, metrics, params, hop_payloads))


@dataclass(frozen=True)
class NodeFailure:
    node_id: int


@dataclass(frozen=True)
class MetricRefresh:
    pass


@dataclass(frozen=True)
class Manual:
    pass


def violations(swarm: Swarm, metrics: NodeMetrics, params: RoutingParams, failed=()) -> list:
    bad = []
    seq = swarm.sequence
    for i, a in enumerate(seq):
        ok = (a not in failed and a in metrics.gpu and _node_ok(a, metrics, params)
              and _hop_ok(seq[i - 1] if i else None, a, metrics, params))
        if not ok:
            bad.append(i)
    return bad


def rebalance(swarm: Swarm, network, params: RoutingParams, trigger,
              hop_payloads: Optional[Sequence[float]] = None) -> Swarm:
    """Repair a swarm after a failure or a metric refresh.

    Positions that fail thresholds (or hold the failed node) are refilled
    in order by :func:`select_next` with everything before them fixed;
    positions that still pass are kept. ``Manual`` re-forms the swarm from
    scratch.
    """
    metrics = as_metrics(network)
    if isinstance(trigger, Manual):
        return form_swarm(metrics, swarm.p, params, hop_payloads)
    failed = {trigger.node_id} if isinstance(trigger, NodeFailure) else set()
    if not isinstance(trigger, (NodeFailure, MetricRefresh)):
        raise ValueError(f"unknown trigger {trigger!r}")
    for node in failed:
        if node in metrics.gpu:
            metrics = metrics.without(node)
    if not violations(swarm, metrics, params, failed):
        return swarm

    seq = list(swarm.sequence)
    for i in range(len(seq)):
        if i not in violations(Swarm(seq), metrics, params, failed):
            continue
        others = set(seq[:i]) | set(seq[i + 1:])
        pool = [a for a in metrics.ids if a not in others and a not in failed]
        try:
            seq[i] = select_next(seq[:i], pool, metrics, params, _payload_at(hop_payloads, i))
        except NoCandidates:
            raise InsufficientNodes(f"no replacement available for position {i}") from None
    return Swarm(tuple(seq), _score(seq, metrics, params, hop_payloads))


def ph_adjust_reliability(metrics: NodeMetrics, diagram, membership: dict,
                          kappa: float = 0.25) -> NodeMetrics:
    """Boost R for nodes in long-lived H0 components.

    ``membership`` maps node -> lifetime of its component (inf for the
    component that never dies). Lifetimes are normalised by the largest
    finite H0 death of ``diagram``; the resulting R is capped at 1.
    """
    if kappa == 0:
        return metrics
    deaths = diagram.finite(0)[:, 1]
    scale = float(deaths.max()) if deaths.size else 0.0

    def normalised(life):
        if math.isinf(life) or scale <= 0:
            return 1.0
        return min(1.0, life / scale)

    boost = dict(metrics.boost)
    for node in metrics.gpu:
        if node in membership:
            boost[node] = boost.get(node, 1.0) * (1.0 + kappa * normalised(membership[node]))
    return replace(metrics, boost=boost)
