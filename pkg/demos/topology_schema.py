"""Persistent homology of a network metric and schema matching.

Two clusters joined by one slow link give a long-lived H0 bar; a ring of
four nodes without chords adds an H1 loop.
"""
import json
import tempfile

from swarmshard.network import Link, NetworkState, NodeInfo
from swarmshard.partition import Partition
from swarmshard.topology import (bottleneck_distance, build_metric, load_schema_library,
                                 persistence, save_schema_library, select_schema)


def network(edges):
    ids = sorted({v for e in edges for v in e[:2]})
    return NetworkState.build([NodeInfo(i, 1.0) for i in ids],
                              [Link(a, b, lat, 1e9) for a, b, lat in edges])

two_clusters = network([(0, 1, 0.1), (1, 2, 0.1), (0, 2, 0.1),
                        (3, 4, 0.1), (4, 5, 0.1), (3, 5, 0.1), (2, 3, 2.0)])
ring = network([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)])

diagrams = {}
for name, net in (("two_clusters", two_clusters), ("ring", ring)):
    dgm = persistence(build_metric(net, lam=0.0))
    diagrams[name] = dgm
    print(f"{name}: H0 finite deaths {sorted(dgm.finite(0)[:, 1].round(3).tolist())}, "
          f"H1 bars {dgm[1].round(3).tolist()}")

print("\nbottleneck distance H0:", round(bottleneck_distance(diagrams["two_clusters"], diagrams["ring"], 0), 3))

with tempfile.TemporaryDirectory() as tmp:
    plan = json.dumps(Partition(tuple(range(4)), (2,)).to_dict())
    save_schema_library(tmp, [(name, dgm, plan) for name, dgm in diagrams.items()])
    lib = load_schema_library(tmp)
    probe = persistence(build_metric(network([(0, 1, 1.1), (1, 2, 0.9), (2, 3, 1.0), (3, 0, 1.05)]),
                                    lam=0.0))
    print("nearest schema for a perturbed ring:", select_schema(lib, probe))
