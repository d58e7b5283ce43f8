# Elitism GA against Adam, from the same starting population
#
# Drives the command line end to end: init-pop, two train runs, compare.
# Uses MNIST under $DATASET_ROOT when present, otherwise the synthetic task.
# Writes everything under ./demo_runs/.

import json
import os
from pathlib import Path

from accordion import cli, data

out = Path("demo_runs")
out.mkdir(exist_ok=True)

try:
    data.load_mnist(data.dataset_root())
    base = {"architecture": "mnist-custom",
            "dataset": {"name": "mnist", "split": {"train": 2000, "validation": 1000, "test": 0, "seed": 0}},
            "scheme": {"scheme": "elitism", "pop_size": 30, "max_generations": 40}}
    print("using MNIST from", data.dataset_root())
except FileNotFoundError:
    base = {"architecture": "tiny-2x16",
            "dataset": {"name": "synthetic", "synthetic": {"count": 2000, "noise": 0.8},
                        "split": {"train": 1000, "validation": 500, "test": 0, "seed": 7}},
            "scheme": {"scheme": "elitism", "pop_size": 20, "max_generations": 40}}
    print("no MNIST under", data.dataset_root(), "- using the synthetic task")

ga = dict(base, seed=0)
adam = dict(base, seed=0, trainer="adam", baseline={"epochs": 1})
(out / "ga.json").write_text(json.dumps(ga, indent=2))
(out / "adam.json").write_text(json.dumps(adam, indent=2))

cli.main(["init-pop", "--config", str(out / "ga.json"), "--out", str(out / "population.pop")])
cli.main(["train", "--config", str(out / "ga.json"), "--population", str(out / "population.pop"),
          "--out", str(out / "elitism")])
cli.main(["train", "--config", str(out / "adam.json"), "--population", str(out / "population.pop"),
          "--out", str(out / "adam")])
cli.main(["compare", str(out / "elitism"), str(out / "adam"),
          "--labels", "elitism-accordion", "adam", "--out", str(out / "compare")])

print(open(out / "compare" / "compare.csv").read()[:600])
print("plot:", os.path.abspath(out / "compare" / "compare.svg"))
