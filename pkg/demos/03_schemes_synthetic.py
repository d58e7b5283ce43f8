# The three schemes on a small synthetic task
#
# Each class lights one cell of a grid; heavy noise makes it non-trivial.
# Curves are compared on cumulative network evaluations, since the schemes
# spend very different amounts per generation.

import math

from accordion import data, nn
from accordion.schemes import Evaluator, GeneticRun, Scheme, SchemeConfig, initial_population

task = data.SyntheticTask(classes=2, size=16, count=2000, noise=0.8)
_, val, _ = data.split(data.make_synthetic(task, seed=7), data.SplitSpec(1000, 500, 0, seed=7))
spec = nn.tiny(2, 16)
population = initial_population(spec, pop_size=20, seed=7)

with Evaluator.for_dataset(val) as evaluator:
    for scheme in Scheme:
        cfg = SchemeConfig(scheme=scheme, pop_size=20, max_generations=60)
        history = GeneticRun.start(cfg, evaluator, population, seed=7).run()
        print(f"\n{scheme.value}: {cfg.evaluations_per_step} evaluations per generation")
        for rec in history.records[::10]:
            print(f"  gen {rec.generation_index:3d}  log10(evals) {math.log10(rec.evaluations_so_far):5.2f}"
                  f"  best {rec.best_fitness:.3f}  mean {rec.mean_fitness:.3f}")
