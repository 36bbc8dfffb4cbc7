"""Training loop: Adam with the decaying learning-rate schedule, optional
PGD adversarial training, and per-epoch geometry logging."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import geometry
from .attacks import AttackConfig, pgd_batch
from .data import LabeledDataset, batches
from .model import Adam, Model, TrainConfig, total_loss
from .numcore import Tensor, no_grad


def stream_seed(seed: int, *tags) -> tuple:
    """Deterministic sub-stream key: the config seed plus named tags."""
    return (int(seed),) + tuple(
        zlib.crc32(t.encode()) if isinstance(t, str) else int(t) for t in tags
    )


@dataclass
class EpochLog:
    epoch: int
    clean_train: float
    clean_test: float
    penalty: float
    min_angle_deg: float


def accuracy(model: Model, ds: LabeledDataset, chunk: int = 512) -> float:
    hits = 0
    with no_grad():
        for start in range(0, len(ds), chunk):
            x = ds.inputs[start : start + chunk]
            hits += int((model.predict(x) == ds.labels[start : start + chunk]).sum())
    return hits / len(ds)


def train(model: Model, train_ds: LabeledDataset, cfg: TrainConfig,
          test_ds: LabeledDataset | None = None, augment: bool = False,
          log_fn=None) -> list[EpochLog]:
    opt = Adam(model.parameters(), lr=cfg.lr)
    target = geometry.gram_target(model.k, cfg.s)
    logs = []
    adv_cfg = None
    if cfg.adv_training:
        adv_cfg = AttackConfig(kind="pgd", norm="linf",
                               epsilon=cfg.adv_training.get("epsilon", 0.3),
                               steps=cfg.adv_training.get("steps", 7),
                               step_size=cfg.adv_training.get("step_size", 0.1),
                               seed=cfg.seed)
    for epoch in range(cfg.epochs):
        if epoch > 0 and cfg.decay_every and epoch % cfg.decay_every == 0:
            opt.lr *= cfg.lr_decay
        shuffle = np.random.default_rng(stream_seed(cfg.seed, "shuffle", epoch)).integers(2**31)
        for batch_i, (x, y) in enumerate(
            batches(train_ds, cfg.batch_size, shuffle_seed=shuffle, augment=augment)
        ):
            if adv_cfg is not None:
                ids = [stream_seed(epoch, batch_i, j)[0] + j for j in range(len(x))]
                x = pgd_batch(model, x, y, adv_cfg, sample_ids=ids)
            model.zero_grad()
            loss = total_loss(model, Tensor(x), y, cfg)
            loss.backward()
            opt.step()
        stats = geometry.angle_stats(model.classifier_w.data, target)
        log = EpochLog(
            epoch=epoch,
            clean_train=accuracy(model, train_ds),
            clean_test=accuracy(model, test_ds) if test_ds is not None else float("nan"),
            penalty=stats.penalty_value,
            min_angle_deg=float(np.degrees(stats.min_pair_angle)),
        )
        logs.append(log)
        if log_fn:
            log_fn(log)
    return logs
