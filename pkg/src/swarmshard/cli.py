"""``swarmshard`` command line: partition, swarm, tune, ph, simulate.

Exit codes: 0 success, 2 usage error, 3 input or validation error,
4 infeasible request (not enough nodes, budget larger than the graph).
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

from . import __version__
from .brkga import BrkgaConfig, evolve
from .compgraph import load_graph
from .errors import (InsufficientNodes, InvalidBudget, NoCandidates, ParseError,
                     SwarmShardError)
from .network import load_network
from .partition import (CLAMPED, STRICT_PAPER, MemorySpec, block_cost, io_cost,
                        load_plan, overflow_cost, plan_partition)
from .routing import DEFAULT, RoutingParams, Swarm, Thresholds, form_swarm
from .simulator import (ModelDims, SessionContext, SessionSpec, inject_failure)
from .topology import (build_metric, load_schema_library, persistence, select_schema)
from .tuner import TunerConfig, tune

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3, 4


class _Infeasible(Exception):
    def __init__(self, exc, partial=None):
        super().__init__(str(exc))
        self.exc, self.partial = exc, partial


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _failure(text):
    node, sep, at = text.partition("@")
    try:
        if not sep:
            raise ValueError
        return int(node), float(at)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NODE@TIME, got {text!r}") from None


def _load_settings(path, section, allowed):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from None
    part = doc.get(section, {})
    unknown = sorted(set(part) - set(allowed))
    if unknown:
        raise ParseError(f"unknown settings {unknown}", field=f"{section}.{unknown[0]}")
    return dict(part)


def _routing_params(settings: dict, mode: str) -> RoutingParams:
    settings = dict(settings)
    thresholds = Thresholds(**settings.pop("thresholds", {}))
    return RoutingParams(mode=mode, thresholds=thresholds, **settings)


ROUTING_KEYS = ("gamma", "beta", "alpha_rel", "context_alpha", "thresholds")


# --- commands -----------------------------------------------------------------

def cmd_partition(args) -> int:
    graph = load_graph(args.graph)
    mem = MemorySpec(args.memory, args.bandwidth)
    mode = STRICT_PAPER if args.mode == STRICT_PAPER else CLAMPED
    if args.k > len(graph):
        raise InvalidBudget(f"k={args.k} exceeds the {len(graph)} graph nodes")
    report = {"method": args.method, "k": args.k, "mode": mode}
    if args.method == "dp":
        plan = plan_partition(graph, args.k, mem, mode=mode)
    else:
        names = [f.name for f in fields(BrkgaConfig) if f.name not in ("k", "rng_seed", "mode")]
        settings = _load_settings(args.settings, "brkga", names)
        result = evolve(graph, mem, BrkgaConfig(k=args.k, rng_seed=args.seed, mode=mode, **settings))
        plan = result.best
        _write(args.out, "history.csv", result.history_csv())
        report["generations_run"] = len(result.history) - 1
    blocks = []
    everything = set(graph.node_ids)
    for i, block in enumerate(plan.blocks):
        inside = set(block)
        rest = everything - inside
        blocks.append({
            "index": i,
            "nodes": list(block),
            "io_in": io_cost(graph, rest, inside, mem.B),
            "work": sum(graph[v].work for v in block),
            "overflow": overflow_cost(graph, inside, mem, mode),
            "io_out": io_cost(graph, inside, rest, mem.B),
            "cost": block_cost(graph, inside, mem, mode),
        })
    report.update(bottleneck=plan.bottleneck, blocks=blocks)
    _write(args.out, "plan.json", _dump(plan.to_dict(mem)))
    _write(args.out, "report.json", _dump(report))
    print(f"bottleneck {plan.bottleneck!r} over {plan.k} blocks")
    return EXIT_OK


def cmd_swarm(args) -> int:
    network = load_network(args.network)
    params = _routing_params(_load_settings(args.settings, "routing", ROUTING_KEYS), args.mode)
    swarm = form_swarm(network, args.p, params)
    doc = swarm.to_dict()
    doc["mode"] = args.mode
    _write(args.out, "swarm.json", _dump(doc))
    print(" ".join(str(a) for a in swarm.sequence))
    return EXIT_OK


def cmd_tune(args) -> int:
    networks = [load_network(path) for path in args.network]
    names = [f.name for f in fields(TunerConfig) if f.name != "rng_seed"]
    settings = _load_settings(args.settings, "tuner", names)
    if "bounds" in settings:
        settings["bounds"] = tuple(settings["bounds"])
    base = _routing_params(_load_settings(args.settings, "routing", ROUTING_KEYS), args.mode)
    result = tune(networks if len(networks) > 1 else networks[0], args.p,
                  TunerConfig(rng_seed=args.seed, **settings), base)
    gamma, beta, alpha = result.best
    _write(args.out, "best_params.json",
           _dump({"gamma": gamma, "beta": beta, "alpha_rel": alpha, "F": result.best_F}))
    _write(args.out, "history.csv", result.history_csv())
    print(f"F {result.best_F!r} at gamma={gamma!r} beta={beta!r} alpha={alpha!r}")
    return EXIT_OK


def cmd_ph(args) -> int:
    network = load_network(args.network)
    diagram = persistence(build_metric(network, args.lam))
    _write(args.out, "diagram.csv", diagram.to_csv())
    doc = {"h0_bars": len(diagram[0]), "h1_bars": len(diagram[1]), "schema_id": None}
    if args.library:
        doc["schema_id"] = select_schema(load_schema_library(args.library), diagram)
        print(doc["schema_id"])
    _write(args.out, "ph.json", _dump(doc))
    return EXIT_OK


SCENARIO_KEYS = {"graph", "network", "plan", "session", "swarm", "routing", "mem",
                 "downtime", "batch_coeff"}
SESSION_KEYS = {"tokens_to_generate", "batch_size", "sequence_context", "precision_bytes",
                "model_dims"}


def load_scenario(path, mode=DEFAULT) -> SessionContext:
    """Scenario document; file references resolve against its directory.

    ``swarm`` is an explicit node list; when absent the swarm is formed
    with the ``routing`` settings. ``mem`` overrides the plan's memory spec.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno) from None
    unknown = sorted(set(doc) - SCENARIO_KEYS)
    if unknown:
        raise ParseError(f"unknown scenario fields {unknown}", field=unknown[0])
    for key in ("graph", "network", "plan", "session"):
        if key not in doc:
            raise ParseError("missing required field", field=key)
    base = os.path.dirname(os.path.abspath(path))
    resolve = lambda p: p if os.path.isabs(p) else os.path.join(base, p)
    graph = load_graph(resolve(doc["graph"]))
    network = load_network(resolve(doc["network"]))
    partition, plan_mem = load_plan(resolve(doc["plan"]))
    mem = MemorySpec(**doc["mem"]) if "mem" in doc else plan_mem
    if mem is None:
        raise ParseError("memory spec missing from plan and scenario", field="mem")

    session = dict(doc["session"])
    unknown = sorted(set(session) - SESSION_KEYS)
    if unknown:
        raise ParseError(f"unknown session fields {unknown}", field=f"session.{unknown[0]}")
    dims = session.pop("model_dims", {"head_dim": 1, "n_heads": 1, "n_layers": 1})
    spec = SessionSpec(model=ModelDims(**dims), **session)

    params = _routing_params(doc.get("routing", {}), mode)
    if "swarm" in doc:
        swarm = Swarm(tuple(doc["swarm"]))
        missing = [a for a in swarm.sequence if a not in network.nodes]
        if missing:
            raise ParseError(f"swarm nodes {missing} are not in the network", field="swarm")
    else:
        swarm = form_swarm(network, partition.k, params)
    return SessionContext(graph, partition, swarm, network, spec, mem, params,
                          downtime=float(doc.get("downtime", 5.0)),
                          batch_coeff=float(doc.get("batch_coeff", 0.0)))


def cmd_simulate(args) -> int:
    context = load_scenario(args.scenario, args.mode)
    if args.fail is None:
        trace = context.run()
    else:
        node, at = args.fail
        try:
            trace = inject_failure(context, node, at)
        except InsufficientNodes as exc:
            raise _Infeasible(exc, exc.partial_trace) from None
    _write(args.out, "trace.csv", trace.events_csv())
    _write(args.out, "summary.json", _dump(trace.summary()))
    print(f"tokens/sec {trace.tokens_per_second!r}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    common.add_argument("--mode", choices=(DEFAULT, STRICT_PAPER), default=DEFAULT,
                        help="cost-formula conventions")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--settings", help="JSON settings with brkga/tuner/routing sections")

    parser = argparse.ArgumentParser(prog="swarmshard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("partition", parents=[common], help="max-throughput graph partition")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--memory", type=float, default=0.0, help="fast memory M (bytes)")
    p.add_argument("--bandwidth", type=float, default=1.0, help="bandwidth B (bytes/time)")
    p.add_argument("--method", choices=("dp", "brkga"), default="dp")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("swarm", parents=[common], help="form a node sequence")
    p.add_argument("--network", required=True)
    p.add_argument("--p", type=_positive_int, required=True)
    p.set_defaults(func=cmd_swarm)

    p = sub.add_parser("tune", parents=[common], help="tune routing exponents")
    p.add_argument("--network", required=True, action="append",
                   help="snapshot file; repeat to average over snapshots")
    p.add_argument("--p", type=_positive_int, required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("ph", parents=[common], help="persistence diagram of a network")
    p.add_argument("--network", required=True)
    p.add_argument("--lam", type=float, default=1.0, help="weight of 1/bandwidth in edge length")
    p.add_argument("--library", help="schema library directory")
    p.set_defaults(func=cmd_ph)

    p = sub.add_parser("simulate", parents=[common], help="simulate a pipeline session")
    p.add_argument("--scenario", required=True)
    p.add_argument("--fail", type=_failure, help="inject a failure as NODE@TIME")
    p.set_defaults(func=cmd_simulate)
    return parser


def _report_error(exc, code):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("line", "field", "cycle", "components"):
        value = getattr(exc, attr, None)
        if value is not None:
            doc[attr] = value if not isinstance(value, (set, frozenset, tuple)) else list(value)
    sys.stderr.write(json.dumps(doc, sort_keys=True, default=str) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Infeasible as exc:
        if exc.partial is not None:
            _write(args.out, "trace.csv", exc.partial.events_csv())
            _write(args.out, "summary.json", _dump(exc.partial.summary()))
        return _report_error(exc.exc, EXIT_INFEASIBLE)
    except (InsufficientNodes, NoCandidates, InvalidBudget) as exc:
        return _report_error(exc, EXIT_INFEASIBLE)
    except (SwarmShardError, ValueError, TypeError, KeyError, OSError) as exc:
        return _report_error(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
