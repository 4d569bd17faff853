"""Network snapshots: swarm nodes with resource metrics and undirected links.

Snapshot documents are JSON::

    {
      "nodes": [{"id": 0, "gpu_total": 24, "gpu_used": 4, "load": 2.0,
                 "uptime": 0.99, "coords": [52.5, 13.4], "memory": 1e9}, ...],
      "links": [{"u": 0, "v": 1, "latency": 0.02, "bandwidth": 125.0}, ...],
      "payload": 4096
    }

``memory`` (per-node fast memory, bytes) and the top-level ``payload``
(default bytes moved per hop) are optional.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .errors import ParseError, ValidationError

NODE_FIELDS = {"id", "gpu_total", "gpu_used", "load", "uptime", "coords", "memory"}
LINK_FIELDS = {"u", "v", "latency", "bandwidth"}
TOP_FIELDS = {"nodes", "links", "payload"}


@dataclass(frozen=True)
class NodeInfo:
    id: int
    gpu_total: float
    gpu_used: float = 0.0
    load: float = 1.0
    uptime: float = 1.0
    coords: tuple = ()
    memory: Optional[float] = None

    def __post_init__(self):
        for name in ("gpu_total", "gpu_used", "load", "uptime"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"node {self.id}: {name} must be finite and >= 0")
        if self.uptime > 1:
            raise ValidationError(f"node {self.id}: uptime must lie in [0, 1]")
        if self.gpu_used > self.gpu_total:
            raise ValidationError(f"node {self.id}: gpu_used exceeds gpu_total")
        if self.memory is not None and not self.memory >= 0:
            raise ValidationError(f"node {self.id}: memory must be >= 0")
        object.__setattr__(self, "coords", tuple(self.coords))

    @property
    def gpu_free(self) -> float:
        return self.gpu_total - self.gpu_used


@dataclass(frozen=True)
class Link:
    u: int
    v: int
    latency: float
    bandwidth: float

    def __post_init__(self):
        if self.u == self.v:
            raise ValidationError(f"self-loop link on node {self.u}")
        if not (math.isfinite(self.latency) and self.latency >= 0):
            raise ValidationError(f"link {self.u}-{self.v}: latency must be finite and >= 0")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValidationError(f"link {self.u}-{self.v}: bandwidth must be finite and > 0")


@dataclass(frozen=True)
class NetworkState:
    nodes: dict
    links: dict = field(default_factory=dict)
    payload: float = 0.0

    @classmethod
    def build(cls, nodes: Iterable[NodeInfo], links: Iterable[Link] = (), payload=0.0):
        byid = {}
        for node in nodes:
            if node.id in byid:
                raise ValidationError(f"duplicate node id {node.id}")
            byid[node.id] = node
        bypair = {}
        for link in links:
            key = (min(link.u, link.v), max(link.u, link.v))
            if link.u not in byid or link.v not in byid:
                raise ValidationError(f"link {key} references a missing node")
            if key in bypair:
                raise ValidationError(f"duplicate link {key}")
            bypair[key] = link
        return cls(dict(sorted(byid.items())), dict(sorted(bypair.items())), float(payload))

    @property
    def ids(self) -> tuple:
        return tuple(self.nodes)

    def link(self, u, v) -> Optional[Link]:
        return self.links.get((min(u, v), max(u, v)))

    def without(self, node_id) -> "NetworkState":
        nodes = {i: n for i, n in self.nodes.items() if i != node_id}
        links = {k: l for k, l in self.links.items() if node_id not in k}
        return replace(self, nodes=nodes, links=links)

    def with_node(self, node: NodeInfo) -> "NetworkState":
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return replace(self, nodes=dict(sorted(nodes.items())))


def network_to_dict(net: NetworkState) -> dict:
    nodes = []
    for n in net.nodes.values():
        entry = {"id": n.id, "gpu_total": n.gpu_total, "gpu_used": n.gpu_used,
                 "load": n.load, "uptime": n.uptime, "coords": list(n.coords)}
        if n.memory is not None:
            entry["memory"] = n.memory
        nodes.append(entry)
    links = [{"u": l.u, "v": l.v, "latency": l.latency, "bandwidth": l.bandwidth}
             for l in net.links.values()]
    return {"nodes": nodes, "links": links, "payload": net.payload}


def dumps_network(net: NetworkState) -> str:
    return json.dumps(network_to_dict(net), indent=2) + "\n"


def _reject_unknown(entry, allowed, where):
    if not isinstance(entry, dict):
        raise ParseError("expected an object", field=where)
    unknown = sorted(set(entry) - allowed)
    if unknown:
        raise ParseError(f"unknown fields {unknown}", field=f"{where}.{unknown[0]}")


def network_from_dict(doc) -> NetworkState:
    _reject_unknown(doc, TOP_FIELDS, "snapshot")
    if "nodes" not in doc:
        raise ParseError("missing required field", field="nodes")
    nodes, links = [], []
    for i, entry in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        _reject_unknown(entry, NODE_FIELDS, where)
        try:
            nodes.append(NodeInfo(
                id=int(entry["id"]),
                gpu_total=float(entry["gpu_total"]),
                gpu_used=float(entry.get("gpu_used", 0.0)),
                load=float(entry.get("load", 1.0)),
                uptime=float(entry.get("uptime", 1.0)),
                coords=tuple(entry.get("coords", ())),
                memory=None if entry.get("memory") is None else float(entry["memory"]),
            ))
        except KeyError as exc:
            raise ParseError("missing required field", field=f"{where}.{exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ParseError(str(exc), field=where) from None
    for i, entry in enumerate(doc.get("links", [])):
        where = f"links[{i}]"
        _reject_unknown(entry, LINK_FIELDS, where)
        try:
            links.append(Link(int(entry["u"]), int(entry["v"]),
                              float(entry["latency"]), float(entry["bandwidth"])))
        except KeyError as exc:
            raise ParseError("missing required field", field=f"{where}.{exc.args[0]}") from None
    return NetworkState.build(nodes, links, doc.get("payload", 0.0))


def loads_network(text: str) -> NetworkState:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return network_from_dict(doc)


def load_network(path) -> NetworkState:
    with open(path, encoding="utf-8") as fh:
        return loads_network(fh.read())


def save_network(net: NetworkState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_network(net))


def complete_network(nodes: Iterable[NodeInfo], latency=0.0, bandwidth=1.0, payload=0.0):
    """All-pairs links with uniform latency and bandwidth."""
    nodes = list(nodes)
    links = [Link(a.id, b.id, latency, bandwidth)
             for i, a in enumerate(nodes) for b in nodes[i + 1:]]
    return NetworkState.build(nodes, links, payload)
