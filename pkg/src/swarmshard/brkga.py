"""Biased random-key genetic algorithm over node priority vectors.

A chromosome holds one key in [0, 1] per graph node (aligned with
``graph.node_ids``). Decoding runs Kahn's algorithm with the keys as
priorities and then slices that order with the segment DP; the bottleneck is
the fitness to minimise.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .compgraph import CompGraph, kahn_topo_sort
from .errors import LengthMismatch, ValidationError
from .partition import CLAMPED, MemorySpec, Partition, build_segment_cost, slice_graph_dp

BLEND = "blend"
BIASED_COIN = "biased-coin"


@dataclass(frozen=True)
class BrkgaConfig:
    k: int
    population_size: int = 100
    elite_fraction: float = 0.2
    mutant_fraction: float = 0.15
    crossover_alpha: float = 0.7
    generations: int = 100
    rng_seed: int = 0
    crossover: str = BLEND
    stagnation: int | None = 20
    mode: str = CLAMPED

    def __post_init__(self):
        if self.population_size < 2:
            raise ValidationError("population_size must be >= 2")
        if not (0 < self.elite_fraction < 1 and 0 < self.mutant_fraction < 1):
            raise ValidationError("elite and mutant fractions must lie in (0, 1)")
        if self.elite_fraction + self.mutant_fraction >= 1:
            raise ValidationError("elite_fraction + mutant_fraction must be < 1")
        if not 0 <= self.crossover_alpha <= 1:
            raise ValidationError("crossover_alpha must lie in [0, 1]")
        if self.crossover not in (BLEND, BIASED_COIN):
            raise ValidationError(f"unknown crossover {self.crossover!r}")
        if self.generations < 0 or self.k < 1:
            raise ValidationError("generations must be >= 0 and k >= 1")

    @property
    def n_elite(self):
        return max(1, int(round(self.elite_fraction * self.population_size)))

    @property
    def n_mutant(self):
        return min(self.population_size - self.n_elite,
                   max(0, int(round(self.mutant_fraction * self.population_size))))


@dataclass
class BrkgaResult:
    best: Partition
    bottleneck: float
    keys: np.ndarray
    history: list = field(default_factory=list)

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["generation", "best_fitness"])
        for gen, value in enumerate(self.history):
            writer.writerow([gen, repr(float(value))])
        return buf.getvalue()


def decode(keys, graph: CompGraph, k: int, mem: MemorySpec, mode: str = CLAMPED):
    """Chromosome -> (Partition, bottleneck)."""
    keys = np.asarray(keys, dtype=float)
    if keys.shape != (len(graph),):
        raise LengthMismatch(f"chromosome has {keys.size} keys for {len(graph)} nodes")
    if np.any((keys < 0) | (keys > 1)):
        raise ValidationError("keys must lie in [0, 1]")
    order = kahn_topo_sort(graph, keys)
    oracle = build_segment_cost(graph, order, mem, mode)
    bottleneck, cuts = slice_graph_dp(oracle, len(order), min(k, len(order)))
    return Partition(tuple(order), tuple(cuts), bottleneck), bottleneck


def crossover(parent1, parent2, alpha: float) -> np.ndarray:
    """alpha * parent1 + (1 - alpha) * parent2, element-wise."""
    p1, p2 = np.asarray(parent1, dtype=float), np.asarray(parent2, dtype=float)
    if p1.shape != p2.shape:
        raise LengthMismatch(f"parents have lengths {p1.size} and {p2.size}")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    child = alpha * p1 + (1 - alpha) * p2
    # Rounding can step one ulp outside the parents' interval.
    return np.clip(child, np.minimum(p1, p2), np.maximum(p1, p2))


def biased_coin_crossover(elite, other, rho: float, rng) -> np.ndarray:
    elite, other = np.asarray(elite, dtype=float), np.asarray(other, dtype=float)
    if elite.shape != other.shape:
        raise LengthMismatch(f"parents have lengths {elite.size} and {other.size}")
    return np.where(rng.random(elite.size) < rho, elite, other)


def _roulette(weights, rng):
    cum = np.cumsum(weights)
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), len(weights) - 1))


def _stream(seed, generation, individual):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(generation, individual)))


def evolve(graph: CompGraph, mem: MemorySpec, config: BrkgaConfig) -> BrkgaResult:
    n = len(graph)
    size, n_elite, n_mutant = config.population_size, config.n_elite, config.n_mutant

    def fitness(keys):
        return decode(keys, graph, config.k, mem, config.mode)

    population = [_stream(config.rng_seed, 0, i).random(n) for i in range(size)]
    decoded = [fitness(x) for x in population]

    def rank():
        idx = sorted(range(size), key=lambda i: (decoded[i][1], i))
        return [population[i] for i in idx], [decoded[i] for i in idx]

    population, decoded = rank()
    best_keys, (best_part, best_val) = population[0], decoded[0]
    history = [best_val]
    stale = 0

    for gen in range(1, config.generations + 1):
        elites = population[:n_elite]
        commons = population[n_elite:] or elites
        common_fit = [d[1] for d in decoded[n_elite:]] or [d[1] for d in decoded[:n_elite]]
        elite_w = 1.0 / (1.0 + np.array([d[1] for d in decoded[:n_elite]]))
        common_w = 1.0 / (1.0 + np.array(common_fit))

        children = []
        for i in range(n_elite, size):
            rng = _stream(config.rng_seed, gen, i)
            if i < n_elite + n_mutant:
                children.append(rng.random(n))
                continue
            a = elites[_roulette(elite_w, rng)]
            b = commons[_roulette(common_w, rng)]
            if config.crossover == BLEND:
                children.append(crossover(a, b, config.crossover_alpha))
            else:
                children.append(biased_coin_crossover(a, b, config.crossover_alpha, rng))

        population = elites + children
        decoded = decoded[:n_elite] + [fitness(x) for x in children]
        population, decoded = rank()

        if decoded[0][1] < best_val:
            best_keys, (best_part, best_val) = population[0], decoded[0]
            stale = 0
        else:
            stale += 1
        history.append(best_val)
        if config.stagnation is not None and stale >= config.stagnation:
            break

    return BrkgaResult(best_part, best_val, np.array(best_keys), history)
