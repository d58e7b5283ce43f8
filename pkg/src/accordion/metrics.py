"""Per-generation metrics records and their CSV / JSON-lines persistence."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

METRICS_CSV = "metrics.csv"
METRICS_JSONL = "metrics.jsonl"
TIMINGS_CSV = "timings.csv"


@dataclass(frozen=True)
class MetricsRecord:
    generation_index: int
    evaluations_so_far: int
    best_fitness: float
    mean_fitness: float
    worst_fitness: float
    best_evaluation_loss: float
    wall_clock_seconds: float = 0.0

    @property
    def log10_iterations(self) -> float:
        return math.log10(self.evaluations_so_far)

    def persisted(self) -> dict:
        # wall clock lives in timings.csv so metrics files stay byte-reproducible
        row = asdict(self)
        del row["wall_clock_seconds"]
        row["log10_iterations"] = self.log10_iterations
        return row


PERSISTED_FIELDS = [f.name for f in fields(MetricsRecord) if f.name != "wall_clock_seconds"] + ["log10_iterations"]


def summarize(generation, evaluations, fitness, losses, wall_clock=0.0) -> MetricsRecord:
    fitness = np.asarray(fitness, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    best = int(np.argmax(fitness))
    return MetricsRecord(
        generation_index=int(generation),
        evaluations_so_far=int(evaluations),
        best_fitness=float(fitness[best]),
        # clamp so float summation noise can never order mean outside [worst, best]
        mean_fitness=float(np.clip(fitness.mean(), fitness.min(), fitness.max())),
        worst_fitness=float(fitness.min()),
        best_evaluation_loss=float(losses[best]),
        wall_clock_seconds=float(wall_clock),
    )


def write_metrics(out_dir, records) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / METRICS_JSONL, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.persisted()) + "\n")
    with open(out_dir / METRICS_CSV, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PERSISTED_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.persisted().items()})
    with open(out_dir / TIMINGS_CSV, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation_index", "wall_clock_seconds"])
        for r in records:
            w.writerow([r.generation_index, f"{r.wall_clock_seconds:.6f}"])


def read_metrics_csv(path) -> list[MetricsRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_CSV
    timings = {}
    tpath = path.parent / TIMINGS_CSV
    if tpath.exists():
        with open(tpath, newline="") as fh:
            timings = {int(r["generation_index"]): float(r["wall_clock_seconds"]) for r in csv.DictReader(fh)}
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            g = int(row["generation_index"])
            records.append(MetricsRecord(
                g, int(row["evaluations_so_far"]),
                float(row["best_fitness"]), float(row["mean_fitness"]), float(row["worst_fitness"]),
                float(row["best_evaluation_loss"]), timings.get(g, 0.0)))
    return records


def records_to_json(records) -> list[dict]:
    return [asdict(r) for r in records]


def records_from_json(rows) -> list[MetricsRecord]:
    return [MetricsRecord(**row) for row in rows]
