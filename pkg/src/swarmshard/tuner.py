"""Genetic search over the routing exponents (gamma, beta, alpha_rel)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllZeroFitness, ValidationError
from .routing import RoutingParams, as_metrics, form_swarm, node_cost_terms


@dataclass(frozen=True)
class TunerConfig:
    population_size: int = 50
    generations: int = 50
    mutation_rate: float = 0.3
    mutation_sigma: float = 0.2
    rng_seed: int = 0
    bounds: tuple = (0.1, 4.0)

    def __post_init__(self):
        if self.population_size < 2:
            raise ValidationError("population_size must be >= 2")
        if self.generations < 0:
            raise ValidationError("generations must be >= 0")
        if not 0 <= self.mutation_rate <= 1:
            raise ValidationError("mutation_rate must lie in [0, 1]")
        lo, hi = self.bounds
        if not 0 < lo <= hi:
            raise ValidationError("bounds must satisfy 0 < lo <= hi")


def total_cost(params, network, p: int, base: RoutingParams = RoutingParams(),
               hop_payloads=None) -> float:
    """Summed per-position cost of the swarm formed under ``params``.

    The swarm is built with the windowed selection of ``base``; each position
    is then charged transfer terms from *all* earlier positions.
    """
    gamma, beta, alpha = params
    rp = base.with_exponents(gamma, beta, alpha)
    metrics = as_metrics(network)
    swarm = form_swarm(metrics, p, rp, hop_payloads)
    seq = swarm.sequence
    total = 0.0
    for i, node in enumerate(seq):
        pay = None if hop_payloads is None else hop_payloads[i]
        total += node_cost_terms(node, seq[:i], metrics, rp, pay, window=i).total
    return total


def fitness(F: float) -> float:
    if F < 0:
        raise ValueError("cost must be >= 0")
    return 1.0 / (1.0 + F)


def roulette_select(fitnesses: Sequence[float], rng) -> int:
    w = np.asarray(fitnesses, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise AllZeroFitness("roulette needs non-negative fitnesses with at least one positive")
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(w) - 1)


def blend_crossover(parent1, parent2, eta: float) -> tuple:
    p1, p2 = np.asarray(parent1, float), np.asarray(parent2, float)
    child = eta * p1 + (1 - eta) * p2
    return tuple(float(x) for x in np.clip(child, np.minimum(p1, p2), np.maximum(p1, p2)))


def mutate(theta, rate, sigma, bounds, rng) -> tuple:
    lo, hi = bounds
    theta = np.array(theta, dtype=float)
    hit = rng.random(theta.size) < rate
    theta = np.where(hit, theta + rng.normal(0.0, sigma, theta.size), theta)
    return tuple(float(x) for x in np.clip(theta, lo, hi))


@dataclass
class TuneResult:
    best: tuple
    best_F: float
    history: list = field(default_factory=list)   # (best_F, gamma, beta, alpha) per generation
    initial_F: list = field(default_factory=list)

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["generation", "best_F", "best_gamma", "best_beta", "best_alpha"])
        for gen, (F, g, b, a) in enumerate(self.history):
            writer.writerow([gen] + [repr(float(x)) for x in (F, g, b, a)])
        return buf.getvalue()


def _stream(seed, generation, individual):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(generation, individual)))


def tune(network, p: int, config: TunerConfig = TunerConfig(),
         base: RoutingParams = RoutingParams(), hop_payloads=None) -> TuneResult:
    """Roulette-selected blend crossover with Gaussian mutation and one elite.

    ``network`` may be a list of snapshots, in which case F is their mean.
    """
    snapshots = list(network) if isinstance(network, (list, tuple)) else [network]
    snapshots = [as_metrics(s) for s in snapshots]
    lo, hi = config.bounds

    def cost(theta):
        return float(np.mean([total_cost(theta, s, p, base, hop_payloads) for s in snapshots]))

    pop = [tuple(float(x) for x in _stream(config.rng_seed, 0, i).uniform(lo, hi, 3))
           for i in range(config.population_size)]
    F = [cost(t) for t in pop]
    initial = list(F)
    best_i = int(np.argmin(F))
    best, best_F = pop[best_i], F[best_i]
    history = [(best_F, *best)]

    for gen in range(1, config.generations + 1):
        fit = [fitness(f) for f in F]
        children = [best]
        for i in range(1, config.population_size):
            rng = _stream(config.rng_seed, gen, i)
            a = pop[roulette_select(fit, rng)]
            b = pop[roulette_select(fit, rng)]
            child = blend_crossover(a, b, rng.random())
            children.append(mutate(child, config.mutation_rate, config.mutation_sigma,
                                   config.bounds, rng))
        pop = children
        F = [best_F] + [cost(t) for t in pop[1:]]
        i = int(np.argmin(F))
        if F[i] < best_F:
            best, best_F = pop[i], F[i]
        history.append((best_F, *best))

    return TuneResult(best, best_F, history, initial)
