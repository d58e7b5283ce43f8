# Selection, crossover and mutation on semi-folded chromosomes

import numpy as np

from accordion import nn
from accordion.genome import encode
from accordion.operators import (build_fitness_table, crossover, mutate, mutation_target_count,
                                 rng_stream, roulette_select)

rng = rng_stream(seed=1)

# A fitness table: probabilities are fitness / total fitness.

table = build_fitness_table(ids=[0, 1, 2, 3], fitnesses=[0.12, 0.30, 0.18, 0.40])
for row in table.rows:
    print(f"id {row.individual_id}  fitness {row.fitness:.2f}  p {row.probability:.3f}")

draws = [roulette_select(table, rng) for _ in range(20000)]
print("empirical:", {i: round(draws.count(i) / len(draws), 3) for i in range(4)})

# Two parents and their complementary children.

spec = nn.mnist_custom()
a = encode(nn.glorot_init(spec, 1))
b = encode(nn.glorot_init(spec, 2))
c1, c2 = crossover(a, b, rng, emit_complement=True)

from_a = [np.array_equal(c1.gene(i).values, a.gene(i).values) for i in range(len(a))]
print("child 1 takes", sum(from_a), "of", len(a), "genes from parent a")
print("child 2 takes exactly the others:",
      all(np.array_equal(c2.gene(i).values, (b if fa else a).gene(i).values) for i, fa in enumerate(from_a)))

# Mutation touches int(len * ratio) genes in each section.

print("genes to mutate:", mutation_target_count(86, 0.1), "filters and", mutation_target_count(50, 0.1), "neurons")
m = mutate(a, 0.1, rng)
changed = [i for i in range(len(a)) if not np.array_equal(m.gene(i).values, a.gene(i).values)]
print("changed genes:", changed)

# Filter genes move by Normal(0, 0.5) per value.

delta = (m.values[:7380] - a.values[:7380]).astype(np.float64)
delta = delta[delta != 0]
print(f"filter noise: n={delta.size} mean={delta.mean():+.3f} sd={delta.std():.3f}")
