"""Selection, crossover and mutation shared by every scheme.

Operators work on semi-folded (Accordion) or flat (traditional) chromosomes.
They never modify their inputs and draw all randomness from the
``numpy.random.Generator`` they are given.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ContractError
from .genome import Chromosome, Granularity
from .nn import glorot_stddev, truncated_normal

FILTER_SIGMA = 0.5
OPERATOR_GRANULARITIES = (Granularity.SEMI_FOLDED, Granularity.FLAT)


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream_id,))))


# --------------------------------------------------------------------------
# fitness table / roulette wheel


@dataclass(frozen=True)
class FitnessRow:
    individual_id: int
    evaluation: float
    fitness: float
    probability: float


@dataclass(frozen=True)
class FitnessTable:
    """Rows sorted by fitness, best first (ties: lower id first)."""

    rows: tuple[FitnessRow, ...]

    def __len__(self):
        return len(self.rows)

    @property
    def ids(self):
        return np.array([r.individual_id for r in self.rows], dtype=np.int64)

    @property
    def fitness(self):
        return np.array([r.fitness for r in self.rows])

    @property
    def probabilities(self):
        return np.array([r.probability for r in self.rows])

    @property
    def best(self) -> FitnessRow:
        return self.rows[0]

    @cached_property
    def cumulative(self):
        return np.cumsum(self.probabilities)

    def top(self, k) -> list[int]:
        return [r.individual_id for r in self.rows[:k]]


def build_fitness_table(ids: Sequence[int], fitnesses, evaluations=None) -> FitnessTable:
    """Roulette probabilities ``f_i / sum(f)``, uniform when every fitness is zero."""
    f = np.asarray(fitnesses, dtype=np.float64)
    ids = [int(i) for i in ids]
    if len(ids) != len(f):
        raise ContractError("ids and fitnesses differ in length")
    if not np.all(np.isfinite(f)) or np.any(f < 0):
        raise ContractError("fitness values must be finite and non-negative")
    evals = np.full(len(f), np.nan) if evaluations is None else np.asarray(evaluations, dtype=np.float64)
    total = f.sum()
    p = f / total if total > 0 else np.full(len(f), 1.0 / max(len(f), 1))
    order = sorted(range(len(f)), key=lambda k: (-f[k], ids[k]))
    return FitnessTable(tuple(FitnessRow(ids[k], float(evals[k]), float(f[k]), float(p[k])) for k in order))


def roulette_select(table: FitnessTable, rng: np.random.Generator) -> int:
    if len(table) == 0:
        raise ContractError("cannot select from an empty fitness table")
    cum = table.cumulative
    k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return table.rows[min(k, len(table) - 1)].individual_id


# --------------------------------------------------------------------------
# crossover


def _check_operable(*chroms):
    first = chroms[0]
    for c in chroms:
        if c.granularity not in OPERATOR_GRANULARITIES:
            raise ContractError(f"operators need semi_folded or flat chromosomes, got {c.granularity.value}")
        if c.spec != first.spec or c.granularity != first.granularity:
            raise ContractError("parents must share architecture and granularity")


def crossover(parent_a: Chromosome, parent_b: Chromosome, rng: np.random.Generator,
              emit_complement: bool = False):
    """Uniform gene-level crossover.

    A fair coin per gene picks the donor (``u < 0.5`` -> ``parent_a``). With
    ``emit_complement`` a second child taking the other donor everywhere is
    returned as well.
    """
    _check_operable(parent_a, parent_b)
    lay = parent_a.layout
    from_a = np.repeat(rng.random(len(lay)) < 0.5, lay.lengths)
    child = parent_a.with_values(np.where(from_a, parent_a.values, parent_b.values))
    if not emit_complement:
        return child
    return child, parent_a.with_values(np.where(from_a, parent_b.values, parent_a.values))


# --------------------------------------------------------------------------
# mutation


def mutation_target_count(section_len: int, mutation_ratio: float) -> int:
    if not 0.0 <= mutation_ratio <= 1.0:
        raise ContractError(f"mutation_ratio must lie in [0, 1], got {mutation_ratio}")
    return int(section_len * mutation_ratio)


def scalar_positions(offsets, lengths):
    """Every value index covered by the genes ``(offsets, lengths)``, in gene order."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.size == 0:
        return np.zeros(0, dtype=np.int64)
    heads = np.cumsum(lengths) - lengths
    return np.repeat(np.asarray(offsets) - heads, lengths) + np.arange(int(lengths.sum()))


def pick_mutation_genes(chrom: Chromosome, mutation_ratio: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sorted gene indices chosen per section, without replacement."""
    picked = []
    for sec in chrom.layout.section_slices:
        start, stop = sec.indices(len(chrom))[:2]
        k = mutation_target_count(stop - start, mutation_ratio)
        picked.append(np.sort(rng.choice(stop - start, size=k, replace=False)) + start)
    return picked[0], picked[1]


def mutate(parent: Chromosome, mutation_ratio: float, rng: np.random.Generator,
           filter_sigma: float = FILTER_SIGMA) -> Chromosome:
    """Return a mutated copy of ``parent``.

    In each section ``int(len * mutation_ratio)`` genes are picked. Feature
    genes get every value resampled from ``Normal(value, filter_sigma)``;
    classifier genes get an independent draw from their layer's Glorot
    distribution added to each ingoing weight.
    """
    _check_operable(parent)
    if not 0.0 <= mutation_ratio <= 1.0:
        raise ContractError(f"mutation_ratio must lie in [0, 1], got {mutation_ratio}")
    lay = parent.layout
    values = parent.values.copy()
    feature, classifier = pick_mutation_genes(parent, mutation_ratio, rng)

    pos = scalar_positions(lay.offsets[feature], lay.lengths[feature])
    if pos.size:
        values[pos] = values[pos].astype(np.float64) + rng.normal(0.0, filter_sigma, pos.size)

    layers = parent.spec.param_layers
    for li in np.unique(lay.layers[classifier]):
        genes = classifier[lay.layers[classifier] == li]
        pos = scalar_positions(lay.offsets[genes], lay.lengths[genes])
        noise = truncated_normal(rng, glorot_stddev(layers[li]), pos.size)
        values[pos] = values[pos].astype(np.float64) + noise
    return parent.with_values(values)
