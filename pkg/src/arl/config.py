"""Experiment configuration: one strict JSON document per run.

Unknown keys anywhere in the document are errors so that a typo in a
hyperparameter name cannot silently fall back to a default.  Seeds for
the data/noise/split/train/model stages derive from one master seed
unless a stage pins its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import data as data_mod
from . import losses
from .errors import ConfigError
from .meta import TrainConfig

_SECTIONS = {
    "seed", "dataset", "noise", "split", "loss", "train", "model",
    "emit", "ablation", "theory",
}


def _check_keys(doc, allowed, path):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} under '{path}'")


def _get(doc, key, default, path, types):
    value = doc.get(key, default)
    if value is not None and not isinstance(value, types):
        raise ConfigError(f"'{path}.{key}' has wrong type {type(value).__name__}")
    return value


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment document."""

    raw: dict
    seed: int
    dataset: dict
    noise: dict
    split: dict
    loss: dict
    train: dict
    model: dict
    emit: dict
    ablation: dict = field(default_factory=dict)
    theory: dict = field(default_factory=dict)


def load_config(path, seed_override=None):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    return parse_config(doc, seed_override)


def parse_config(doc, seed_override=None):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _check_keys(doc, _SECTIONS, "$")
    master = seed_override if seed_override is not None else doc.get("seed", 0)
    if not isinstance(master, int):
        raise ConfigError("'seed' must be an integer")
    override = seed_override is not None

    def stage_seed(section, offset):
        if not override and isinstance(section, dict) and "seed" in section:
            return section["seed"]
        return master + offset

    dataset = dict(doc.get("dataset", {}))
    _check_keys(dataset, {"generator", "n", "classes", "dim", "spread", "csv", "seed"}, "dataset")
    if "csv" in dataset and "generator" in dataset:
        raise ConfigError("'dataset' takes either 'generator' or 'csv', not both")
    if "csv" not in dataset:
        dataset.setdefault("generator", "blobs")
        if dataset["generator"] != "blobs":
            raise ConfigError(f"unknown generator {dataset['generator']!r}")
        dataset.setdefault("n", 4030)
        dataset.setdefault("classes", 3)
        dataset.setdefault("dim", 2)
        dataset.setdefault("spread", 0.4)
    dataset["seed"] = stage_seed(doc.get("dataset"), 1)

    noise = dict(doc.get("noise", {}))
    _check_keys(noise, {"type", "eta", "superclasses", "exact_count", "seed"}, "noise")
    noise.setdefault("type", "none")
    if noise["type"] not in ("none", "symmetric", "asymmetric", "hierarchical"):
        raise ConfigError(f"unknown noise type {noise['type']!r}")
    noise.setdefault("eta", 0.0)
    noise.setdefault("exact_count", False)
    if noise["type"] == "hierarchical" and "superclasses" not in noise:
        raise ConfigError("hierarchical noise needs 'noise.superclasses'")
    noise["seed"] = stage_seed(doc.get("noise"), 2)

    split = dict(doc.get("split", {}))
    _check_keys(split, {"meta_size", "test_fraction", "seed"}, "split")
    split.setdefault("meta_size", 30)
    split.setdefault("test_fraction", 1000)
    split["seed"] = stage_seed(doc.get("split"), 3)

    loss = dict(doc.get("loss", {}))
    _check_keys(loss, {"variant", "init", "rce_a"}, "loss")
    loss.setdefault("variant", "gce")
    if loss["variant"] not in losses.VARIANTS:
        raise ConfigError(f"unknown loss variant {loss['variant']!r}")
    loss.setdefault("rce_a", -4.0)
    init = loss.get("init", {})
    _check_keys(init, set(losses.LEARNABLE[loss["variant"]]), "loss.init")

    train = dict(doc.get("train", {}))
    _check_keys(
        train,
        {"alpha", "beta", "batch_n", "batch_m", "iters", "fd_eps", "momentum",
         "decay_steps", "decay_factor", "metrics_every", "seed"},
        "train",
    )
    train.setdefault("alpha", 0.3)
    train.setdefault("beta", 0.3)
    train.setdefault("batch_n", 100)
    train.setdefault("batch_m", 30)
    train.setdefault("iters", 1000)
    train.setdefault("fd_eps", 1e-3)
    train.setdefault("momentum", 0.0)
    train.setdefault("decay_steps", [])
    train.setdefault("decay_factor", 0.1)
    train.setdefault("metrics_every", 50)
    train["seed"] = stage_seed(doc.get("train"), 4)

    model = dict(doc.get("model", {}))
    _check_keys(model, {"hidden", "activation", "seed"}, "model")
    model.setdefault("hidden", [16])
    model.setdefault("activation", "tanh")
    model["seed"] = stage_seed(doc.get("model"), 5)

    emit = dict(doc.get("emit", {}))
    _check_keys(emit, {"weights", "losscurve"}, "emit")
    emit.setdefault("weights", loss["variant"] == "polysoft")
    emit.setdefault("losscurve", True)

    ablation = dict(doc.get("ablation", {}))
    _check_keys(ablation, {"modes", "grid"}, "ablation")

    theory = dict(doc.get("theory", {}))
    _check_keys(theory, {"classes", "etas", "delta", "world_labels", "variant", "hyper"}, "theory")

    return ExperimentConfig(
        raw=doc, seed=master, dataset=dataset, noise=noise, split=split,
        loss=loss, train=train, model=model, emit=emit,
        ablation=ablation, theory=theory,
    )


def initial_hyper(exp, num_classes):
    base = losses.default_hyper(exp.loss["variant"], num_classes)
    fields = dict(exp.loss.get("init", {}))
    fields["rce_a"] = exp.loss["rce_a"]
    return replace(base, **fields)


def build_datasets(exp):
    """Generate or load, split, and corrupt per the config sections."""
    ds_cfg = exp.dataset
    if "csv" in ds_cfg:
        clean = data_mod.load_csv(ds_cfg["csv"])
    else:
        clean = data_mod.gen_blobs(
            ds_cfg["n"], ds_cfg["classes"], ds_cfg["dim"], ds_cfg["spread"], ds_cfg["seed"]
        )
    split = data_mod.split_meta(
        clean, exp.split["meta_size"], exp.split["test_fraction"], exp.split["seed"]
    )
    train = _apply_noise(split.train, exp.noise)
    return data_mod.MetaSplit(train, split.meta, split.test)


def _apply_noise(dataset, noise):
    kind = noise["type"]
    if kind == "none":
        return dataset
    if kind == "symmetric":
        return data_mod.inject_symmetric(
            dataset, noise["eta"], noise["seed"], noise["exact_count"]
        )
    if kind == "asymmetric":
        return data_mod.inject_asymmetric(
            dataset, noise["eta"], noise["seed"], noise["exact_count"]
        )
    return data_mod.inject_hierarchical(
        dataset, noise["eta"], noise["superclasses"], noise["seed"], noise["exact_count"]
    )


def build_train_config(exp, num_classes):
    t = exp.train
    return TrainConfig(
        variant=exp.loss["variant"],
        alpha=t["alpha"],
        beta=t["beta"],
        batch_n=t["batch_n"],
        batch_m=t["batch_m"],
        max_iters=t["iters"],
        seed=t["seed"],
        fd_eps=t["fd_eps"],
        init_hyper=initial_hyper(exp, num_classes),
        rce_a=exp.loss["rce_a"],
        momentum=t["momentum"],
        decay_steps=tuple(t["decay_steps"]),
        decay_factor=t["decay_factor"],
        metrics_every=t["metrics_every"],
        hidden=tuple(exp.model["hidden"]),
        activation=exp.model["activation"],
        model_seed=exp.model["seed"],
    )
