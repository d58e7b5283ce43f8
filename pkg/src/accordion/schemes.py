"""Steady-state, generational and elitism training schemes."""
from __future__ import annotations

import enum
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .genome import Chromosome, Granularity, decode, encode, refold
from .metrics import MetricsRecord, summarize
from .nn import NetworkSpec, evaluate, glorot_init
from .operators import (FitnessTable, build_fitness_table, crossover, mutate,
                        roulette_select, rng_stream)


class Scheme(str, enum.Enum):
    STEADY_STATE = "steady_state"
    GENERATIONAL = "generational"
    ELITISM = "elitism"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.ELITISM
    pop_size: int = 100
    crossover_share: float = 0.7
    mutation_ratio: float = 0.1
    generational_mutation_probability: float = 0.2
    elite_count: int = 10
    elitism_pool_size: int = 20
    # operator granularity: semi_folded (Accordion, stored folded) or flat (traditional)
    granularity: Granularity = Granularity.SEMI_FOLDED
    max_generations: int | None = 100
    target_accuracy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        self.validate()

    def validate(self):
        for name in ("crossover_share", "mutation_ratio", "generational_mutation_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]", field=name)
        if self.pop_size < 2:
            raise ConfigError("pop_size must be at least 2", field="pop_size")
        if self.granularity is Granularity.FOLDED:
            raise ConfigError("operators run on semi_folded or flat chromosomes", field="granularity")
        if self.scheme is Scheme.GENERATIONAL and self.pop_size % 2:
            raise ConfigError("generational scheme needs an even pop_size", field="pop_size")
        if self.scheme is Scheme.ELITISM:
            if not 0 <= self.elite_count < self.pop_size:
                raise ConfigError("elite_count must be below pop_size", field="elite_count")
            if self.elitism_pool_size < 2:
                raise ConfigError("elitism_pool_size must be at least 2", field="elitism_pool_size")
        if self.max_generations is None and self.target_accuracy is None:
            raise ConfigError("set max_generations and/or target_accuracy", field="max_generations")

    @property
    def storage_granularity(self):
        return Granularity.FOLDED if self.granularity is Granularity.SEMI_FOLDED else self.granularity

    @property
    def evaluations_per_step(self):
        return {Scheme.STEADY_STATE: 1,
                Scheme.GENERATIONAL: self.pop_size,
                Scheme.ELITISM: self.pop_size - self.elite_count}[self.scheme]


@dataclass(frozen=True)
class Member:
    id: int
    chromosome: Chromosome
    fitness: float
    loss: float


@dataclass(frozen=True)
class Population:
    generation: int
    members: tuple[Member, ...]
    next_id: int
    evaluations: int

    def __len__(self):
        return len(self.members)

    @property
    def table(self) -> FitnessTable:
        return build_fitness_table([m.id for m in self.members], [m.fitness for m in self.members],
                                   [m.loss for m in self.members])

    def by_id(self, member_id) -> Member:
        for m in self.members:
            if m.id == member_id:
                return m
        raise KeyError(member_id)

    @property
    def best(self) -> Member:
        return min(self.members, key=lambda m: (-m.fitness, m.id))

    def record(self, wall_clock=0.0) -> MetricsRecord:
        return summarize(self.generation, self.evaluations,
                         [m.fitness for m in self.members], [m.loss for m in self.members], wall_clock)


# --------------------------------------------------------------------------
# evaluation

_WORKER_DATA = None


def _init_worker(images, labels, batch_size):
    global _WORKER_DATA
    _WORKER_DATA = (images, labels, batch_size)


def _score(chrom, images, labels, batch_size):
    return evaluate(decode(chrom), images, labels, batch_size)


def _score_in_worker(chrom):
    return _score(chrom, *_WORKER_DATA)


class Evaluator:
    """Scores chromosomes as (accuracy, cross-entropy) on a fixed labelled set.

    With ``workers > 1`` chromosomes fan out over a process pool; each score
    depends only on its chromosome, so results do not depend on worker count.
    """

    def __init__(self, images, labels, batch_size=32, workers=1):
        self.images = np.asarray(images, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.batch_size = batch_size
        self.workers = workers
        self.calls = 0
        self._pool = None

    @classmethod
    def for_dataset(cls, ds, batch_size=32, workers=1):
        return cls(ds.images, ds.labels, batch_size, workers)

    def __call__(self, chromosomes: Sequence[Chromosome]) -> list[tuple[float, float]]:
        chromosomes = list(chromosomes)
        self.calls += len(chromosomes)
        if self.workers <= 1 or len(chromosomes) < 2:
            return [_score(c, self.images, self.labels, self.batch_size) for c in chromosomes]
        if self._pool is None:
            self._pool = ProcessPoolExecutor(self.workers, initializer=_init_worker,
                                             initargs=(self.images, self.labels, self.batch_size))
        return list(self._pool.map(_score_in_worker, chromosomes))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def evaluate_population(pop: Population, eval_set, batch_size=32, workers=1) -> FitnessTable:
    """Re-score every member on ``eval_set`` and return the resulting table."""
    with Evaluator.for_dataset(eval_set, batch_size, workers) as ev:
        scores = ev([m.chromosome for m in pop.members])
    return build_fitness_table([m.id for m in pop.members], [s[0] for s in scores],
                               [s[1] for s in scores])


# --------------------------------------------------------------------------
# population set-up


def initial_population(spec: NetworkSpec, pop_size: int, seed: int,
                       granularity=Granularity.FOLDED) -> list[Chromosome]:
    """``pop_size`` Glorot-initialised networks; member ``i`` uses seed ``(seed, i)``."""
    return [encode(glorot_init(spec, [seed, i]), granularity) for i in range(pop_size)]


def evaluate_initial(chromosomes, evaluator, storage=Granularity.FOLDED) -> Population:
    chromosomes = [refold(c, storage) for c in chromosomes]
    scores = evaluator(chromosomes)
    members = tuple(Member(i, c, acc, loss) for i, (c, (acc, loss)) in enumerate(zip(chromosomes, scores)))
    return Population(0, members, len(members), len(members))


# --------------------------------------------------------------------------
# scheme steps


def _working(member, config):
    return refold(member.chromosome, config.granularity)


def _stored(chrom, config):
    return refold(chrom, config.storage_granularity)


def steady_state_step(pop: Population, config: SchemeConfig, rng, evaluator) -> Population:
    """Breed one child (crossover with probability ``crossover_share``) and
    let it replace the least fit member."""
    table = pop.table
    if rng.random() < config.crossover_share:
        a = pop.by_id(roulette_select(table, rng))
        b = pop.by_id(roulette_select(table, rng))
        child = crossover(_working(a, config), _working(b, config), rng)
    else:
        parent = pop.by_id(roulette_select(table, rng))
        child = mutate(_working(parent, config), config.mutation_ratio, rng)
    child = _stored(child, config)
    (acc, loss), = evaluator([child])
    # least fit loses; among equals the most recently added goes first
    worst = min(range(len(pop.members)), key=lambda k: (pop.members[k].fitness, -pop.members[k].id))
    members = list(pop.members)
    members[worst] = Member(pop.next_id, child, acc, loss)
    return Population(pop.generation + 1, tuple(members), pop.next_id + 1, pop.evaluations + 1)


def _maybe_mutate(children, config, rng):
    out = []
    for c in children:
        if rng.random() < config.generational_mutation_probability:
            c = mutate(c, config.mutation_ratio, rng)
        out.append(c)
    return out


def _new_members(pop, children, evaluator, config):
    children = [_stored(c, config) for c in children]
    scores = evaluator(children)
    return [Member(pop.next_id + k, c, acc, loss) for k, (c, (acc, loss)) in enumerate(zip(children, scores))]


def generational_step(pop: Population, config: SchemeConfig, rng, evaluator) -> Population:
    """Replace the whole population with complementary crossover children."""
    if len(pop) % 2:
        raise ConfigError("generational scheme needs an even pop_size", field="pop_size")
    table = pop.table
    pool = [roulette_select(table, rng) for _ in range(len(pop))]
    pool = [pool[k] for k in rng.permutation(len(pool))]
    children = []
    for a_id, b_id in zip(pool[0::2], pool[1::2]):
        pair = crossover(_working(pop.by_id(a_id), config), _working(pop.by_id(b_id), config),
                         rng, emit_complement=True)
        children.extend(pair)
    children = _maybe_mutate(children, config, rng)
    members = _new_members(pop, children, evaluator, config)
    return Population(pop.generation + 1, tuple(members), pop.next_id + len(members),
                      pop.evaluations + len(members))


def elitism_step(pop: Population, config: SchemeConfig, rng, evaluator) -> Population:
    """Carry the top ``elite_count`` over and breed the rest from a small mating pool."""
    if config.elitism_pool_size < 2:
        raise ConfigError("elitism_pool_size must be at least 2", field="elitism_pool_size")
    table = pop.table
    elites = [pop.by_id(i) for i in table.top(config.elite_count)]
    pool = [roulette_select(table, rng) for _ in range(config.elitism_pool_size)]
    children = []
    for _ in range(len(pop) - config.elite_count):
        i, j = rng.choice(len(pool), size=2, replace=False)
        children.append(crossover(_working(pop.by_id(pool[i]), config),
                                  _working(pop.by_id(pool[j]), config), rng))
    children = _maybe_mutate(children, config, rng)
    members = _new_members(pop, children, evaluator, config)
    return Population(pop.generation + 1, tuple(elites + members), pop.next_id + len(members),
                      pop.evaluations + len(members))


STEPS: dict[Scheme, Callable] = {
    Scheme.STEADY_STATE: steady_state_step,
    Scheme.GENERATIONAL: generational_step,
    Scheme.ELITISM: elitism_step,
}


# --------------------------------------------------------------------------
# run loop


@dataclass
class RunHistory:
    records: list[MetricsRecord] = field(default_factory=list)
    population: Population | None = None
    network: "Network | None" = None  # set by backprop runs

    @property
    def best_fitness(self):
        return [r.best_fitness for r in self.records]


class GeneticRun:
    """Stateful driver: one ``step()`` per generation, resumable from ``state()``."""

    def __init__(self, config: SchemeConfig, evaluator: Evaluator, population: Population,
                 rng: np.random.Generator, records=None, elapsed=0.0):
        self.config = config
        self.evaluator = evaluator
        self.population = population
        self.rng = rng
        self._elapsed = elapsed
        self._t0 = time.perf_counter()
        self.records = list(records) if records else [population.record(elapsed)]

    @classmethod
    def start(cls, config: SchemeConfig, evaluator: Evaluator, chromosomes, seed: int):
        t0 = time.perf_counter()
        pop = evaluate_initial(chromosomes, evaluator, config.storage_granularity)
        return cls(config, evaluator, pop, rng_stream(seed, 1), elapsed=time.perf_counter() - t0)

    @property
    def elapsed(self):
        return self._elapsed + time.perf_counter() - self._t0

    def done(self) -> bool:
        cfg = self.config
        if cfg.max_generations is not None and self.population.generation >= cfg.max_generations:
            return True
        return cfg.target_accuracy is not None and self.population.best.fitness >= cfg.target_accuracy

    def step(self) -> MetricsRecord:
        self.population = STEPS[self.config.scheme](self.population, self.config, self.rng, self.evaluator)
        rec = self.population.record(self.elapsed)
        self.records.append(rec)
        return rec

    def run(self, on_step=None) -> RunHistory:
        while not self.done():
            rec = self.step()
            if on_step is not None:
                on_step(self, rec)
        return RunHistory(self.records, self.population)

    def state(self) -> dict:
        """JSON-ready snapshot of everything but the chromosomes themselves."""
        pop = self.population
        return {
            "generation": pop.generation,
            "next_id": pop.next_id,
            "evaluations": pop.evaluations,
            "members": [{"id": m.id, "fitness": m.fitness, "loss": m.loss} for m in pop.members],
            "rng_state": self.rng.bit_generator.state,
            "records": [r.__dict__ for r in self.records],
            "elapsed": self.elapsed,
        }

    @classmethod
    def restore(cls, config, evaluator, chromosomes, state):
        members = tuple(Member(int(m["id"]), c, float(m["fitness"]), float(m["loss"]))
                        for m, c in zip(state["members"], chromosomes))
        pop = Population(int(state["generation"]), members, int(state["next_id"]), int(state["evaluations"]))
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = state["rng_state"]
        records = [MetricsRecord(**r) for r in state["records"]]
        return cls(config, evaluator, pop, rng, records, float(state.get("elapsed", 0.0)))


def run(config: SchemeConfig, dataset, seed: int, chromosomes=None, spec: NetworkSpec | None = None,
        batch_size=32, workers=1) -> RunHistory:
    """Evolve from ``chromosomes`` (or a fresh Glorot population of ``spec``) on ``dataset``."""
    if chromosomes is None:
        if spec is None:
            raise ConfigError("pass either an initial population or an architecture", field="spec")
        chromosomes = initial_population(spec, config.pop_size, seed)
    if len(chromosomes) != config.pop_size:
        raise ConfigError(f"population has {len(chromosomes)} members, pop_size is {config.pop_size}",
                          field="pop_size")
    with Evaluator.for_dataset(dataset, batch_size, workers) as ev:
        return GeneticRun.start(config, ev, chromosomes, seed).run()
