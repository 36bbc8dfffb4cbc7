"""Flat key=value run configuration with dotted namespaces.

Example::

    dataset.name = blobs
    dataset.k = 3
    model.arch = mlp
    train.alpha = 100
    attack.0.kind = pgd
    attack.0.eps = 0.3

Unknown keys are rejected so typos fail loudly. Every key is documented in
the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .attacks import AttackConfig
from .model import TrainConfig


class ConfigError(ValueError):
    pass


_DATASET_KEYS = {
    "name", "images", "labels", "test_images", "test_labels", "batches",
    "test_batches", "k", "p", "n_per_class", "spread", "seed", "limit",
    "test_limit", "augment",
}
_MODEL_KEYS = {"arch", "p", "activation", "hidden", "bias"}
_TRAIN_KEYS = {
    "alpha", "s", "lr", "lr_decay", "decay_every", "epochs", "batch_size",
    "seed", "penalty_norm", "adv_training", "adv_eps", "adv_steps",
    "adv_step_size",
}
_ATTACK_KEYS = {
    "kind", "norm", "eps", "steps", "step_size", "overshoot", "random_start",
    "cw_search_steps", "cw_confidence", "seed", "name",
}
_OUTPUT_KEYS = {"dir"}
_EVAL_KEYS = {"limit"}


@dataclass
class RunConfig:
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: list[AttackConfig] = field(default_factory=list)
    output_dir: str = "runs/default"
    eval_limit: int | None = None
    raw: dict = field(default_factory=dict)


def _parse_scalar(v: str):
    s = v.strip()
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_kv(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_scalar(value)
    return out


def _attack_from_dict(d: dict, default_seed: int) -> AttackConfig:
    kwargs = dict(d)
    if "eps" in kwargs:
        kwargs["epsilon"] = kwargs.pop("eps")
    kwargs.setdefault("seed", default_seed)
    return AttackConfig(**kwargs)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        kv = parse_kv(fh.read())
    return build_config(kv)


def build_config(kv: dict) -> RunConfig:
    cfg = RunConfig(raw=dict(kv))
    train_kwargs = {}
    attack_dicts: dict[int, dict] = {}
    for key, value in kv.items():
        parts = key.split(".")
        ns = parts[0]
        if ns == "dataset" and len(parts) == 2 and parts[1] in _DATASET_KEYS:
            cfg.dataset[parts[1]] = value
        elif ns == "model" and len(parts) == 2 and parts[1] in _MODEL_KEYS:
            cfg.model[parts[1]] = value
        elif ns == "train" and len(parts) == 2 and parts[1] in _TRAIN_KEYS:
            train_kwargs[parts[1]] = value
        elif ns == "attack" and len(parts) == 3 and parts[2] in _ATTACK_KEYS:
            try:
                i = int(parts[1])
            except ValueError:
                raise ConfigError(f"bad attack index in {key!r}") from None
            attack_dicts.setdefault(i, {})[parts[2]] = value
        elif ns == "output" and len(parts) == 2 and parts[1] in _OUTPUT_KEYS:
            cfg.output_dir = str(value)
        elif ns == "eval" and len(parts) == 2 and parts[1] in _EVAL_KEYS:
            cfg.eval_limit = int(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    adv = None
    if train_kwargs.pop("adv_training", False):
        adv = {
            "epsilon": train_kwargs.pop("adv_eps", 0.3),
            "steps": train_kwargs.pop("adv_steps", 7),
            "step_size": train_kwargs.pop("adv_step_size", 0.1),
        }
    else:
        for k in ("adv_eps", "adv_steps", "adv_step_size"):
            train_kwargs.pop(k, None)
    train_kwargs["adv_training"] = adv
    # reference schedule decays every 60 of 400 epochs; scale proportionally
    epochs = train_kwargs.get("epochs", TrainConfig.epochs)
    train_kwargs.setdefault("decay_every", max(1, round(epochs * 60 / 400)))
    cfg.train = TrainConfig(**train_kwargs)
    cfg.attacks = [
        _attack_from_dict(attack_dicts[i], cfg.train.seed) for i in sorted(attack_dicts)
    ]
    return cfg
