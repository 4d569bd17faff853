"""Split a 64-layer chain across 4 shards, first exactly and then with BRKGA.

The DP is exact for a fixed topological order; BRKGA searches over orders
as well, which only matters for graphs with branches.
"""
import numpy as np

from swarmshard.brkga import BrkgaConfig, evolve
from swarmshard.compgraph import random_dag
from swarmshard.partition import MemorySpec, block_cost, plan_partition
from swarmshard.simulator import transformer_chain

chain = transformer_chain(64, layer_work=1.0, layer_params=3.0, activation_bytes=2.0)
mem = MemorySpec(M=60.0, B=4.0)

plan = plan_partition(chain, 4, mem)
print("chain cuts:", plan.cuts, "bottleneck:", round(plan.bottleneck, 3))
for i, block in enumerate(plan.blocks):
    print(f"  block {i}: {len(block)} nodes, cost {block_cost(chain, block, mem):.3f}")

# A branchy DAG: BRKGA explores priorities, the DP evaluates each decoded order.
dag = random_dag(np.random.default_rng(4), 24, edge_prob=0.2)
result = evolve(dag, mem, BrkgaConfig(k=3, population_size=40, generations=30, rng_seed=4))
print("\nrandom DAG, BRKGA best bottleneck:", round(result.bottleneck, 3))
print("history (every 5th generation):", [round(h, 3) for h in result.history[::5]])
