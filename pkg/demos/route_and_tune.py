"""Form a swarm on a small heterogeneous network and tune the cost exponents."""
import numpy as np

from swarmshard.network import Link, NetworkState, NodeInfo
from swarmshard.routing import NodeFailure, RoutingParams, form_swarm, rebalance
from swarmshard.tuner import TunerConfig, tune

rng = np.random.default_rng(11)
nodes = [NodeInfo(i, gpu_total=float(rng.uniform(2, 16)), load=float(rng.uniform(0.5, 4)),
                  uptime=float(rng.uniform(0.6, 1.0))) for i in range(8)]
links = [Link(a, b, latency=float(rng.uniform(0.005, 0.08)), bandwidth=float(rng.uniform(10, 100)))
         for a in range(8) for b in range(a + 1, 8)]
net = NetworkState.build(nodes, links, payload=1.0)

params = RoutingParams()
swarm = form_swarm(net, 4, params)
print("swarm:", swarm.sequence)
print("per-position cost:", [round(h.total, 3) for h in swarm.hops])

# Losing a member refills only its position.
survivor = rebalance(swarm, net, params, NodeFailure(swarm[1]))
print(f"after node {swarm[1]} fails:", survivor.sequence)

result = tune(net, 4, TunerConfig(population_size=30, generations=20, rng_seed=0))
print("\ntuned (gamma, beta, alpha_rel):", tuple(round(x, 3) for x in result.best))
print("F: initial best", round(min(result.initial_F), 4), "-> final", round(result.best_F, 4))
