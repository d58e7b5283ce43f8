import math

import numpy as np
import pytest

from accordion import nn
from accordion.errors import ContractError
from accordion.genome import Granularity, encode
from accordion.operators import (build_fitness_table, crossover, mutate, mutation_target_count,
                                 pick_mutation_genes, rng_stream, roulette_select)


def three_sigma_ok(counts, probs, n):
    sd = np.sqrt(n * probs * (1 - probs))
    return np.all(np.abs(counts - n * probs) <= 3 * sd + 1e-12)


def draw_counts(table, n, seed):
    rng = rng_stream(seed)
    ids = list(table.ids)
    counts = np.zeros(len(ids))
    for _ in range(n):
        counts[ids.index(roulette_select(table, rng))] += 1
    return counts, np.array([table.probabilities[i] for i in range(len(ids))])


@pytest.fixture(scope="module")
def mnist_chroms():
    spec = nn.mnist_custom()
    return [encode(nn.glorot_init(spec, s), Granularity.SEMI_FOLDED) for s in (1, 2)]


# ---------------------------------------------------------------- fitness table


def test_table_probabilities():
    t = build_fitness_table([0, 1, 2], [0.2, 0.3, 0.5])
    assert dict(zip(t.ids, t.probabilities)) == pytest.approx({0: 0.2, 1: 0.3, 2: 0.5}, abs=1e-12)
    assert list(t.ids) == [2, 1, 0]
    assert t.best.individual_id == 2
    t = build_fitness_table(range(4), [1, 1, 1, 1])
    assert t.probabilities == pytest.approx([0.25] * 4)
    assert list(t.ids) == [0, 1, 2, 3]
    t = build_fitness_table(range(3), [0, 0, 0])
    assert t.probabilities == pytest.approx([1 / 3] * 3)
    assert math.fsum(t.probabilities) == pytest.approx(1.0, abs=1e-9)


def test_table_rejects_bad_fitness():
    with pytest.raises(ContractError):
        build_fitness_table([0, 1], [0.5, -0.1])
    with pytest.raises(ContractError):
        build_fitness_table([0, 1], [0.5, float("nan")])


def test_roulette_single_member():
    t = build_fitness_table([7], [1.0])
    rng = rng_stream(0)
    assert {roulette_select(t, rng) for _ in range(50)} == {7}


def test_roulette_empty():
    with pytest.raises(ContractError):
        roulette_select(build_fitness_table([], []), rng_stream(0))


def test_roulette_two_way():
    counts, probs = draw_counts(build_fitness_table([0, 1], [0.5, 0.5]), 100_000, 1)
    assert three_sigma_ok(counts, probs, 100_000)


def test_rng_stream_reproducible():
    a = rng_stream(5, 3).random(4)
    assert np.array_equal(a, rng_stream(5, 3).random(4))
    assert not np.array_equal(a, rng_stream(5, 4).random(4))


# ---------------------------------------------------------------- crossover


def test_crossover_identical_parents(mnist_chroms):
    a = mnist_chroms[0]
    assert crossover(a, a, rng_stream(0)) == a


def test_crossover_complement_and_parents_untouched(mnist_chroms):
    a, b = mnist_chroms
    before = (a.values.copy(), b.values.copy())
    c1, c2 = crossover(a, b, rng_stream(3), emit_complement=True)
    for i in range(len(a)):
        g1, g2 = c1.gene(i).values, c2.gene(i).values
        from_a = np.array_equal(g1, a.gene(i).values)
        assert from_a == np.array_equal(g2, b.gene(i).values)
        assert np.array_equal(g1, a.gene(i).values) or np.array_equal(g1, b.gene(i).values)
    assert np.array_equal(a.values, before[0]) and np.array_equal(b.values, before[1])


def test_crossover_donor_split():
    spec = nn.NetworkSpec("wide", (1, 1, 1), (nn.Flatten(), nn.Dense(10_000, activation="softmax")), 10_000)
    a = encode(nn.zeros_like_spec(spec), "semi_folded")
    b = a.with_values(np.ones(a.values.size, np.float32))
    child = crossover(a, b, rng_stream(9))
    n = len(child)
    taken_b = int(child.values.sum())
    assert n == 10_000
    assert abs(taken_b - n / 2) <= 3 * math.sqrt(n / 4)


def test_crossover_rejects(mnist_chroms, lenet_spec):
    a, b = mnist_chroms
    from accordion.genome import refold
    with pytest.raises(ContractError):
        crossover(refold(a, "folded"), refold(b, "folded"), rng_stream(0))
    with pytest.raises(ContractError):
        crossover(a, refold(b, "flat"), rng_stream(0))
    with pytest.raises(ContractError):
        crossover(a, encode(nn.glorot_init(lenet_spec, 0)), rng_stream(0))


# ---------------------------------------------------------------- mutation


def test_mutation_counts():
    assert mutation_target_count(86, 0.1) == 8
    assert mutation_target_count(50, 0.1) == 5
    assert mutation_target_count(86, 0.0) == 0
    assert mutation_target_count(86, 1.0) == 86
    for bad in (-0.1, 1.5):
        with pytest.raises(ContractError):
            mutation_target_count(10, bad)


def test_mutate_ratio_zero_is_identity(mnist_chroms):
    a = mnist_chroms[0]
    assert mutate(a, 0.0, rng_stream(0)) == a


def test_mutate_changes_exact_gene_counts(mnist_chroms):
    a = mnist_chroms[0]
    before = a.values.copy()
    for seed in range(20):
        child = mutate(a, 0.1, rng_stream(seed))
        changed = [i for i in range(len(a)) if not np.array_equal(child.gene(i).values, a.gene(i).values)]
        assert sum(i < 86 for i in changed) == 8
        assert sum(i >= 86 for i in changed) == 5
    assert np.array_equal(a.values, before)


def test_mutation_genes_without_replacement(mnist_chroms):
    feat, cls = pick_mutation_genes(mnist_chroms[0], 1.0, rng_stream(0))
    assert list(feat) == list(range(86))
    assert list(cls) == list(range(86, 136))


def test_filter_noise_statistics(mnist_chroms):
    a = mnist_chroms[0]
    rng = rng_stream(11)
    diffs = []
    while sum(d.size for d in diffs) < 10_000:
        child = mutate(a, 0.1, rng)
        # the first 7380 scalars are the conv filters
        delta = child.values[:7380].astype(np.float64) - a.values[:7380]
        diffs.append(delta[delta != 0])
    d = np.concatenate(diffs)
    assert d.size >= 10_000
    assert abs(d.mean()) <= 3 * 0.5 / math.sqrt(d.size)
    assert 0.45 <= d.std() <= 0.55


def test_classifier_noise_is_glorot(mnist_chroms):
    a = mnist_chroms[0]
    rng = rng_stream(12)
    deltas = []
    for _ in range(300):
        child = mutate(a, 0.1, rng)
        d = child.values[7380 + 360:].astype(np.float64) - a.values[7380 + 360:]
        deltas.append(d[d != 0])
    d = np.concatenate(deltas)
    sd = math.sqrt(2 / (40 + 10))
    assert np.abs(d).max() <= 2 * sd + 1e-6
    assert abs(d.std() / sd - 0.8796) < 0.03


def test_mutate_flat(mnist_spec):
    chrom = encode(nn.glorot_init(mnist_spec, 0), "flat")
    child = mutate(chrom, 0.01, rng_stream(0))
    changed = np.flatnonzero(child.values != chrom.values)
    assert changed.size == int(7380 * 0.01) + int(760 * 0.01)


def test_mutate_rejects(mnist_chroms):
    from accordion.genome import refold
    with pytest.raises(ContractError):
        mutate(mnist_chroms[0], 1.2, rng_stream(0))
    with pytest.raises(ContractError):
        mutate(refold(mnist_chroms[0], "folded"), 0.1, rng_stream(0))
