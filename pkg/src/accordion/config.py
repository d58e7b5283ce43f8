"""Run configuration documents (JSON) and dataset resolution.

See ``docs/config.md`` for the schema. Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baseline import BaselineConfig
from .data import (Dataset, SplitSpec, SyntheticTask, dataset_root, load_cifar10, load_mnist,
                   make_synthetic, split, to_grayscale)
from .errors import AccordionError, ConfigError
from .genome import Granularity
from .nn import NetworkSpec, get_architecture
from .schemes import Scheme, SchemeConfig

GRANULARITIES = {"accordion": Granularity.SEMI_FOLDED, "traditional": Granularity.FLAT}
TRAINERS = ("ga", "adam", "sgd")
DATASETS = ("mnist", "cifar10", "synthetic")
SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "synthetic"
    root: str | None = None
    split: SplitSpec = SplitSpec()
    eval_split: str = "validation"
    synthetic: SyntheticTask = SyntheticTask()
    synthetic_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    seed: int
    dataset: DatasetConfig = DatasetConfig()
    scheme: SchemeConfig = SchemeConfig()
    architecture: str | dict = "mnist-custom"
    trainer: str = "ga"
    granularity: str = "accordion"
    batch_size: int = 32
    baseline: BaselineConfig = BaselineConfig()
    output_dir: str = "runs/default"
    checkpoint_interval: int = 10
    workers: int = 1

    @property
    def spec(self) -> NetworkSpec:
        return get_architecture(self.architecture)


# --------------------------------------------------------------------------
# parsing


def _strict(cls, doc, path, convert=None):
    """Build dataclass ``cls`` from mapping ``doc``; ``convert`` maps key -> callable."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'document'} must be an object", field=path)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in doc:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown configuration key {where!r}", field=where)
    kwargs = {}
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if convert and key in convert:
            value = convert[key](value, where)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'document'}: {exc}", field=path) from None


def _number(kind):
    def conv(value, where):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        if value is None or not ok:
            raise ConfigError(f"{where} must be a{'n integer' if kind is int else ' number'}", field=where)
        return value
    return conv


def _optional(conv):
    return lambda v, where: None if v is None else conv(v, where)


def _choice(options):
    def conv(value, where):
        if value not in options:
            raise ConfigError(f"{where} must be one of {list(options)}, got {value!r}", field=where)
        return value
    return conv


def _split_value(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
        raise ConfigError(f"{where} must be a non-negative count or fraction", field=where)
    return value


def _parse_split(doc, path):
    return _strict(SplitSpec, doc, path, {
        "train": _split_value, "validation": _split_value, "test": _split_value,
        "seed": _number(int)})


def _parse_synthetic(doc, path):
    return _strict(SyntheticTask, doc, path, {
        "classes": _number(int), "size": _number(int), "count": _number(int), "noise": _number(float)})


def _parse_dataset(doc, path):
    if isinstance(doc, str):
        doc = {"name": doc}
    return _strict(DatasetConfig, doc, path, {
        "name": _choice(DATASETS),
        "split": _parse_split,
        "eval_split": _choice(SPLITS),
        "synthetic": _parse_synthetic,
        "synthetic_seed": _number(int),
    })


def _parse_scheme(doc, path, granularity):
    if isinstance(doc, str):
        doc = {"scheme": doc}
    doc = dict(doc)
    if "granularity" in doc:
        raise ConfigError(f"{path}.granularity: set the top-level 'granularity' instead",
                          field=f"{path}.granularity")
    doc["granularity"] = granularity
    return _strict(SchemeConfig, doc, path, {
        "scheme": _choice([s.value for s in Scheme]),
        "pop_size": _number(int), "elite_count": _number(int), "elitism_pool_size": _number(int),
        "crossover_share": _number(float), "mutation_ratio": _number(float),
        "generational_mutation_probability": _number(float),
        "max_generations": _optional(_number(int)), "target_accuracy": _optional(_number(float)),
    })


def _parse_baseline(doc, path):
    return _strict(BaselineConfig, doc, path, {
        "optimizer": _choice(("adam", "sgd")),
        "learning_rate": _number(float), "beta1": _number(float), "beta2": _number(float),
        "epsilon": _number(float), "epochs": _number(int), "max_steps": _optional(_number(int)),
        "batch_size": _number(int), "eval_every": _number(int),
    })


def parse_config(doc) -> RunConfig:
    """Validate a configuration mapping (or JSON text) and fill in defaults."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    if "seed" not in doc:
        raise ConfigError("configuration needs an explicit 'seed'", field="seed")
    granularity = doc.get("granularity", "accordion")
    if granularity not in GRANULARITIES:
        raise ConfigError(f"granularity must be one of {list(GRANULARITIES)}", field="granularity")
    cfg = _strict(RunConfig, doc, "", {
        "seed": _number(int),
        "dataset": _parse_dataset,
        "scheme": lambda d, p: _parse_scheme(d, p, GRANULARITIES[granularity]),
        "baseline": _parse_baseline,
        "trainer": _choice(TRAINERS),
        "batch_size": _number(int),
        "checkpoint_interval": _number(int),
        "workers": _number(int),
    })
    if "scheme" not in doc:
        cfg = dataclasses.replace(cfg, scheme=SchemeConfig(granularity=GRANULARITIES[granularity]))
    try:
        cfg.spec
    except AccordionError as exc:
        raise ConfigError(f"architecture: {exc}", field="architecture") from None
    if cfg.batch_size < 1:
        raise ConfigError("batch_size must be positive", field="batch_size")
    if cfg.checkpoint_interval < 0:
        raise ConfigError("checkpoint_interval must be >= 0", field="checkpoint_interval")
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: RunConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    scheme = doc["scheme"]
    scheme["scheme"] = cfg.scheme.scheme.value
    del scheme["granularity"]
    return doc


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# datasets


def load_dataset(cfg: RunConfig, root=None) -> tuple[Dataset, Dataset, Dataset]:
    """(train, validation, test) for the configured source, shaped for the architecture."""
    dc = cfg.dataset
    spec = cfg.spec
    if dc.name == "synthetic":
        ds = make_synthetic(dc.synthetic, dc.synthetic_seed)
    else:
        base = dataset_root(root or dc.root)
        ds = load_mnist(base) if dc.name == "mnist" else load_cifar10(base)
    if spec.input_shape[2] == 1 and ds.images.shape[3] == 3:
        ds = to_grayscale(ds)
    if ds.images.shape[1:] != spec.input_shape:
        raise ConfigError(f"{dc.name} images are {ds.images.shape[1:]}, "
                          f"{spec.name} expects {spec.input_shape}", field="architecture")
    if ds.class_count != spec.class_count:
        raise ConfigError(f"{dc.name} has {ds.class_count} classes, {spec.name} outputs {spec.class_count}",
                          field="architecture")
    return split(ds, dc.split)


def eval_dataset(cfg: RunConfig, parts, which=None) -> Dataset:
    return dict(zip(SPLITS, parts))[which or cfg.dataset.eval_split]
