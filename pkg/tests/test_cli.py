import csv
import json

import numpy as np
import pytest

from accordion import cli, nn
from accordion.config import config_to_dict, parse_config, serialize_config
from accordion.errors import ConfigError, FormatError
from accordion.genome import Granularity
from accordion.metrics import MetricsRecord, read_metrics_csv, summarize, write_metrics
from accordion.persist import load_population, save_population
from accordion.schemes import Scheme, initial_population


def run_config(tmp_path, **over):
    doc = {
        "seed": 0,
        "architecture": "tiny-2x16",
        "dataset": {"name": "synthetic", "synthetic": {"count": 80}},
        "scheme": {"scheme": "elitism", "pop_size": 10, "elite_count": 3, "elitism_pool_size": 5,
                   "max_generations": 5},
        "checkpoint_interval": 2,
    }
    doc.update(over)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return path


# ---------------------------------------------------------------- config


def test_config_defaults():
    cfg = parse_config({"seed": 1})
    assert cfg.scheme.pop_size == 100 and cfg.scheme.scheme is Scheme.ELITISM
    assert cfg.batch_size == 32 and cfg.trainer == "ga"
    assert cfg.scheme.granularity is Granularity.SEMI_FOLDED
    assert cfg.spec.name == "mnist-custom"
    assert parse_config({"seed": 1, "granularity": "traditional"}).scheme.granularity is Granularity.FLAT


@pytest.mark.parametrize("doc,field", [
    ({"seed": 1, "scheme": {"pop_sise": 10}}, "scheme.pop_sise"),
    ({"seed": 1, "colour": "red"}, "colour"),
    ({"architecture": "tiny"}, "seed"),
    ({"seed": 1, "scheme": {"granularity": "flat"}}, "scheme.granularity"),
    ({"seed": 1, "granularity": "zigzag"}, "granularity"),
    ({"seed": 1, "architecture": "resnet"}, "architecture"),
    ({"seed": 1, "trainer": "lbfgs"}, "trainer"),
    ({"seed": "one"}, "seed"),
])
def test_config_errors(doc, field):
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.field == field


def test_config_roundtrip():
    cfg = parse_config({"seed": 3, "scheme": "generational", "dataset": "mnist", "granularity": "traditional",
                        "baseline": {"epochs": 1}})
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert config_to_dict(again)["scheme"]["scheme"] == "generational"


# ---------------------------------------------------------------- persistence and metrics


def test_population_file_roundtrip(tmp_path):
    chroms = initial_population(nn.tiny(2, 16), 4, seed=0)
    save_population(tmp_path / "p.pop", chroms, {"note": "x"})
    back, header = load_population(tmp_path / "p.pop")
    assert back == chroms and header["note"] == "x" and header["size"] == 4


def test_population_file_errors(tmp_path):
    chroms = initial_population(nn.tiny(2, 16), 2, seed=0)
    save_population(tmp_path / "p.pop", chroms)
    raw = (tmp_path / "p.pop").read_bytes()
    (tmp_path / "cut.pop").write_bytes(raw[:-20])
    with pytest.raises(FormatError):
        load_population(tmp_path / "cut.pop")
    (tmp_path / "bad.pop").write_bytes(b"NOTPOP" + raw[6:])
    with pytest.raises(FormatError, match="offset 0"):
        load_population(tmp_path / "bad.pop")


def test_summarize_and_metrics_files(tmp_path):
    rec = summarize(2, 30, [0.1, 0.4, 0.4], [2.0, 1.5, 1.2], wall_clock=1.25)
    assert (rec.best_fitness, rec.worst_fitness, rec.best_evaluation_loss) == (0.4, 0.1, 1.5)
    assert rec.log10_iterations == pytest.approx(np.log10(30))
    write_metrics(tmp_path, [rec])
    assert read_metrics_csv(tmp_path) == [rec]
    assert "wall_clock" not in (tmp_path / "metrics.csv").read_text()
    row = json.loads((tmp_path / "metrics.jsonl").read_text())
    assert row["log10_iterations"] == rec.log10_iterations


# ---------------------------------------------------------------- commands


def test_init_pop(tmp_path):
    out = tmp_path / "pop.bin"
    assert cli.main(["init-pop", "--config", str(run_config(tmp_path)), "--out", str(out)]) == 0
    chroms, header = load_population(out)
    assert len(chroms) == 10 and header["seed"] == 0
    assert chroms == initial_population(nn.tiny(2, 16), 10, seed=0)


def test_train_writes_metrics(tmp_path):
    conf = run_config(tmp_path)
    pop = tmp_path / "pop.bin"
    cli.main(["init-pop", "--config", str(conf), "--out", str(pop)])
    out = tmp_path / "elitism"
    assert cli.main(["train", "--config", str(conf), "--population", str(pop), "--out", str(out)]) == 0
    records = read_metrics_csv(out / "metrics.csv")
    assert [r.generation_index for r in records] == list(range(6))
    assert [r.evaluations_so_far for r in records] == [10 + 7 * g for g in range(6)]
    best = [r.best_fitness for r in records]
    assert best == sorted(best)
    assert (out / "checkpoint.pop").exists() and (out / "config.json").exists()
    assert len((out / "timings.csv").read_text().splitlines()) == 7


def test_resume_equals_uninterrupted(tmp_path):
    conf = run_config(tmp_path)
    full = tmp_path / "full"
    cli.main(["train", "--config", str(conf), "--out", str(full)])
    part = tmp_path / "part"
    short = run_config(tmp_path, scheme={"scheme": "elitism", "pop_size": 10, "elite_count": 3,
                                         "elitism_pool_size": 5, "max_generations": 2})
    cli.main(["train", "--config", str(short), "--out", str(part)])
    conf = run_config(tmp_path)
    assert cli.main(["train", "--config", str(conf), "--out", str(part), "--resume"]) == 0
    assert (part / "metrics.csv").read_bytes() == (full / "metrics.csv").read_bytes()


def test_resume_without_checkpoint(tmp_path):
    assert cli.main(["train", "--config", str(run_config(tmp_path)), "--out", str(tmp_path / "x"), "--resume"]) == 2


def test_adam_trainer_and_compare(tmp_path):
    conf = run_config(tmp_path)
    pop = tmp_path / "pop.bin"
    cli.main(["init-pop", "--config", str(conf), "--out", str(pop)])
    ga, bp = tmp_path / "ga", tmp_path / "adam"
    cli.main(["train", "--config", str(conf), "--population", str(pop), "--out", str(ga)])
    adam = run_config(tmp_path, trainer="adam", baseline={"epochs": 1, "learning_rate": 0.01})
    assert cli.main(["train", "--config", str(adam), "--population", str(pop), "--out", str(bp)]) == 0
    recs = read_metrics_csv(bp)
    # the baseline starts from the fittest member of the shared population
    assert recs[0].best_fitness == read_metrics_csv(ga)[0].best_fitness

    out = tmp_path / "cmp"
    assert cli.main(["compare", str(ga), str(bp), "--labels", "elitism-accordion", "adam", "--out", str(out)]) == 0
    with open(out / "compare.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["log10_evaluations", "elitism-accordion", "adam"]
    xs = [float(r[0]) for r in rows[1:]]
    assert xs == sorted(xs) and len(set(xs)) == len(xs)
    assert all(any(cell != "" for cell in r[1:]) for r in rows[1:])
    assert (out / "compare.svg").read_text().lstrip().startswith("<?xml")


def test_compare_rejects_empty_run_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["compare", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) != 0
    assert cli.main(["compare", "--out", str(tmp_path / "o")]) != 0


def test_eval_command(tmp_path, capsys):
    conf = run_config(tmp_path)
    out = tmp_path / "run"
    cli.main(["train", "--config", str(conf), "--out", str(out)])
    capsys.readouterr()
    assert cli.main(["eval", "--config", str(conf), "--checkpoint", str(out / "checkpoint.pop")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["accuracy"] == pytest.approx(read_metrics_csv(out)[-1].best_fitness)
    assert cli.main(["eval", "--config", str(conf), "--checkpoint", str(out / "checkpoint.pop"),
                     "--member", "9999"]) == 2


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"seed": 0, "scheme": {"popsize": 3}}')
    assert cli.main(["init-pop", "--config", str(path), "--out", str(tmp_path / "p")]) == 2


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "accordion", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "init-pop" in res.stdout


@pytest.mark.parametrize("arch", ["tiny-ax3", {"layers": []}, {"name": "x"}])
def test_malformed_architecture_is_config_error(arch):
    with pytest.raises(ConfigError):
        parse_config({"seed": 0, "architecture": arch})
