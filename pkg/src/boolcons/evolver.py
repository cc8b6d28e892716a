"""Steady-state GP with 3-tournament elimination."""
from __future__ import annotations

import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gp import (CROSSOVER_KINDS, GpTree, TerminalContext, crossover,
                 random_tree, subtree_mutation)

log = logging.getLogger(__name__)

PAPER_SCALE = dict(population_size=500, max_depth=5, mutation_prob=0.5,
                   budget=500_000, runs=30)


@dataclass
class EvolverConfig:
    population_size: int = 500
    max_depth: int = 5
    mutation_prob: float = 0.5
    budget: int = 50_000
    runs: int = 10
    rng_seed: int = 0
    crossover_kinds: tuple = CROSSOVER_KINDS
    count_initial: bool = True  # initial population evaluations use up budget
    stop_at: float | None = None  # optional early exit once best >= stop_at

    def __post_init__(self):
        self.crossover_kinds = tuple(self.crossover_kinds)
        if self.population_size < 3:
            raise ValueError("population_size must be at least 3")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.budget < self.population_size:
            raise ValueError("budget must cover the initial population")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        unknown = set(self.crossover_kinds) - set(CROSSOVER_KINDS)
        if unknown or not self.crossover_kinds:
            raise ValueError(f"bad crossover kinds {sorted(unknown)}")


@dataclass
class RunResult:
    best_tree: GpTree
    best_fitness: object
    evaluations_used: int
    fitness_history: list  # (evaluation index, best-so-far value, best tree size)
    rng_seed: int
    population: list = field(default_factory=list, repr=False)


def derive_seed(base: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of ``base`` for the given keys."""
    ss = np.random.SeedSequence([base & (2**64 - 1), *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _value(f) -> object:
    return getattr(f, "value", f)


def run(config: EvolverConfig, ctx: TerminalContext, evaluator: Callable,
        rng: random.Random | int | None = None) -> RunResult:
    """One steady-state run; ``evaluator(tree)`` returns a fitness (``.value`` or number)."""
    if rng is None:
        rng = config.rng_seed
    seed = rng if isinstance(rng, int) else None
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)

    pop: list[GpTree] = []
    fits = []
    evals = 0
    best_tree, best_fit = None, None
    history = []

    def consider(tree, fit):
        nonlocal best_tree, best_fit
        if best_fit is None or _value(fit) > _value(best_fit):
            best_tree, best_fit = tree, fit
            history.append((evals, float(_value(fit)), tree.size))

    def done():
        return (config.stop_at is not None and best_fit is not None
                and _value(best_fit) >= config.stop_at)

    for _ in range(config.population_size):
        t = random_tree(ctx, config.max_depth, rng)
        f = evaluator(t)
        if config.count_initial:
            evals += 1
        pop.append(t)
        fits.append(f)
        consider(t, f)

    slots = range(config.population_size)
    while evals < config.budget and not done():
        trio = rng.sample(slots, 3)
        worst_val = min(_value(fits[i]) for i in trio)
        losers = [i for i in trio if _value(fits[i]) == worst_val]
        worst = losers[0] if len(losers) == 1 else rng.choice(losers)
        a, b = [i for i in trio if i != worst]
        if rng.random() < 0.5:
            a, b = b, a
        kind = rng.choice(config.crossover_kinds)
        child = crossover(pop[a], pop[b], kind, rng, config.max_depth)
        if rng.random() < config.mutation_prob:
            child = subtree_mutation(child, ctx, config.max_depth, rng)
        f = evaluator(child)
        evals += 1
        pop[worst] = child
        fits[worst] = f
        consider(child, f)

    return RunResult(best_tree, best_fit, evals, history, seed, pop)


def _run_indexed(args):
    config, ctx, evaluator, index = args
    seed = derive_seed(config.rng_seed, index)
    res = run(config, ctx, evaluator, seed)
    log.info("run %d finished: best %s after %d evaluations", index,
             float(_value(res.best_fitness)), res.evaluations_used)
    return res


def run_batch(config: EvolverConfig, ctx: TerminalContext, evaluator: Callable,
              workers: int = 1) -> list[RunResult]:
    """``config.runs`` independent runs, seeded by ``derive_seed(rng_seed, index)``."""
    jobs = [(config, ctx, evaluator, i) for i in range(config.runs)]
    if workers <= 1:
        return [_run_indexed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_indexed, jobs))
