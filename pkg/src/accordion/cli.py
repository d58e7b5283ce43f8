"""Command line driver.

    accordion init-pop --config run.json --out pop.bin
    accordion train    --config run.json --population pop.bin --out runs/elitism
    accordion compare  runs/elitism runs/adam --out runs/compare
    accordion eval     --config run.json --checkpoint runs/elitism/checkpoint.pop --split test
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import baseline
from .config import eval_dataset, load_config, load_dataset, serialize_config
from .errors import AccordionError, ConfigError
from .genome import Granularity, decode, encode
from .metrics import METRICS_CSV, read_metrics_csv, write_metrics
from .persist import load_population, save_population
from .schemes import Evaluator, GeneticRun, initial_population

log = logging.getLogger("accordion")

CHECKPOINT = "checkpoint.pop"


def _config(args):
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "out", None) is not None and args.command == "train":
        overrides["output_dir"] = args.out
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


# --------------------------------------------------------------------------
# init-pop


def cmd_init_population(cfg, out) -> Path:
    chroms = initial_population(cfg.spec, cfg.scheme.pop_size, cfg.seed)
    save_population(out, chroms, {"kind": "initial", "seed": cfg.seed})
    log.info("wrote %d %s members to %s", len(chroms), cfg.spec.name, out)
    return Path(out)


# --------------------------------------------------------------------------
# train


def _save_checkpoint(out_dir, run: GeneticRun, cfg):
    state = run.state()
    state["kind"] = "checkpoint"
    state["config"] = json.loads(serialize_config(cfg))
    save_population(Path(out_dir) / CHECKPOINT, [m.chromosome for m in run.population.members], state)


def _train_ga(cfg, parts, out_dir, population, resume):
    eval_set = eval_dataset(cfg, parts)
    ckpt = out_dir / CHECKPOINT
    with Evaluator.for_dataset(eval_set, cfg.batch_size, cfg.workers) as ev:
        if resume:
            if not ckpt.exists():
                raise FileNotFoundError(f"--resume given but {ckpt} does not exist")
            chroms, state = load_population(ckpt)
            run = GeneticRun.restore(cfg.scheme, ev, chroms, state)
            log.info("resumed at generation %d", run.population.generation)
        else:
            if population is not None:
                chroms, _ = load_population(population)
            else:
                chroms = initial_population(cfg.spec, cfg.scheme.pop_size, cfg.seed)
            if len(chroms) != cfg.scheme.pop_size:
                raise ConfigError(f"population file holds {len(chroms)} members but scheme.pop_size is "
                                  f"{cfg.scheme.pop_size}", field="scheme.pop_size")
            if chroms[0].spec != cfg.spec:
                raise ConfigError(f"population encodes {chroms[0].spec.name}, config asks for {cfg.spec.name}",
                                  field="architecture")
            run = GeneticRun.start(cfg.scheme, ev, chroms, cfg.seed)

        def on_step(r, rec):
            log.info("gen %d evals %d best %.4f mean %.4f", rec.generation_index,
                     rec.evaluations_so_far, rec.best_fitness, rec.mean_fitness)
            if cfg.checkpoint_interval and rec.generation_index % cfg.checkpoint_interval == 0:
                _save_checkpoint(out_dir, r, cfg)
                write_metrics(out_dir, r.records)

        history = run.run(on_step)
        _save_checkpoint(out_dir, run, cfg)
    return history


def _train_bp(cfg, parts, out_dir, population):
    train, eval_set = parts[0], eval_dataset(cfg, parts)
    init = None
    if population is not None:
        # start from the fittest member of the shared initial population
        chroms, _ = load_population(population)
        with Evaluator.for_dataset(eval_set, cfg.batch_size) as ev:
            scores = ev(chroms)
        best = max(range(len(chroms)), key=lambda k: (scores[k][0], -k))
        init = decode(chroms[best])
        log.info("starting from member %d (accuracy %.4f)", best, scores[best][0])
    bcfg = dataclasses.replace(cfg.baseline, optimizer=cfg.trainer)
    history = baseline.train_bp(bcfg, train, eval_set, cfg.seed, init=init, spec=cfg.spec,
                                eval_batch_size=cfg.batch_size)
    net = history.network
    save_population(out_dir / CHECKPOINT, [encode(net, Granularity.FOLDED)],
                    {"kind": "network", "trainer": cfg.trainer,
                     "members": [{"id": 0, "fitness": history.records[-1].best_fitness,
                                  "loss": history.records[-1].best_evaluation_loss}]})
    return history


def cmd_train(cfg, population=None, resume=False, dataset_root=None):
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(serialize_config(cfg))
    parts = load_dataset(cfg, dataset_root)
    if cfg.trainer == "ga":
        history = _train_ga(cfg, parts, out_dir, population, resume)
    else:
        history = _train_bp(cfg, parts, out_dir, population)
    write_metrics(out_dir, history.records)
    return history


# --------------------------------------------------------------------------
# compare


def cmd_compare(run_dirs, out, labels=None):
    """Align runs on log10(evaluations) and write compare.csv + compare.svg."""
    if not run_dirs:
        raise ConfigError("compare needs at least one run directory")
    labels = list(labels) if labels else [Path(d).name or str(d) for d in run_dirs]
    if len(labels) != len(run_dirs) or len(set(labels)) != len(labels):
        raise ConfigError("need one distinct label per run directory")
    series = {}
    for label, d in zip(labels, run_dirs):
        path = Path(d) / METRICS_CSV
        if not path.exists():
            raise FileNotFoundError(f"{d}: no {METRICS_CSV} (is this a run directory?)")
        records = read_metrics_csv(path)
        if not records:
            raise ConfigError(f"{d}: metrics file has no rows")
        series[label] = {r.evaluations_so_far: r.best_fitness for r in records}
    xs = sorted(set().union(*series.values()))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["log10_evaluations"] + labels)
        for x in xs:
            w.writerow([repr(math.log10(x))] + [repr(series[l][x]) if x in series[l] else "" for l in labels])
    _plot(series, labels, out / "compare.svg")
    return out / "compare.csv", out / "compare.svg"


def _plot(series, labels, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label in labels:
        pts = sorted(series[label].items())
        ax.plot([math.log10(x) for x, _ in pts], [y for _, y in pts], label=label)
    ax.set_xlabel("log10(network evaluations)")
    ax.set_ylabel("best accuracy")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --------------------------------------------------------------------------
# eval


def cmd_eval(cfg, checkpoint, member="best", which=None, dataset_root=None):
    chroms, header = load_population(checkpoint)
    ids = [m["id"] for m in header.get("members", [])] or list(range(len(chroms)))
    if member == "best":
        if header.get("members"):
            fits = [m["fitness"] for m in header["members"]]
            k = max(range(len(chroms)), key=lambda i: (fits[i], -ids[i]))
        else:
            k = 0
    else:
        if int(member) not in ids:
            raise ConfigError(f"member {member} not in {checkpoint}")
        k = ids.index(int(member))
    ds = eval_dataset(cfg, load_dataset(cfg, dataset_root), which)
    (acc, loss), = Evaluator.for_dataset(ds, cfg.batch_size)([chroms[k]])
    return {"member": ids[k], "split": which or cfg.dataset.eval_split, "accuracy": acc, "loss": loss}


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="accordion", description="Genetic-algorithm CNN training.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--dataset-root", help="overrides DATASET_ROOT")
        sp.add_argument("--workers", type=int, help="evaluation processes")

    sp = sub.add_parser("init-pop", help="create a shared initial population")
    common(sp, "population file to write")
    sp = sub.add_parser("train", help="run a GA scheme or the backprop baseline")
    common(sp, "output directory (overrides output_dir)")
    sp.add_argument("--population", help="initial population file from init-pop")
    sp.add_argument("--resume", action="store_true", help="continue from <out>/checkpoint.pop")
    sp = sub.add_parser("compare", help="align runs and draw their best-accuracy curves")
    sp.add_argument("runs", nargs="*")
    sp.add_argument("--out", required=True)
    sp.add_argument("--labels", nargs="*")
    sp = sub.add_parser("eval", help="score a checkpointed member on a dataset split")
    common(sp, "unused")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--member", default="best")
    sp.add_argument("--split", choices=["train", "validation", "test"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            csv_path, svg_path = cmd_compare(args.runs, args.out, args.labels)
            print(csv_path)
            print(svg_path)
            return 0
        cfg = _config(args)
        if args.command == "init-pop":
            print(cmd_init_population(cfg, args.out or "population.pop"))
        elif args.command == "train":
            history = cmd_train(cfg, args.population, args.resume, args.dataset_root)
            last = history.records[-1]
            print(f"generation {last.generation_index}: best {last.best_fitness:.4f} "
                  f"after {last.evaluations_so_far} evaluations")
        else:
            print(json.dumps(cmd_eval(cfg, args.checkpoint, args.member, args.split, args.dataset_root)))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"path error: {exc}", file=sys.stderr)
        return 2
    except AccordionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
