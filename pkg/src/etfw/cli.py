"""Command-line harness: train, attack, verify, export-features.

Exit codes: 0 success, 1 config/data error, 2 verification failure.
Relative dataset paths resolve under $ETFW_DATA_DIR (default: cwd).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import checkpoint, geometry, verify
from .attacks import robust_accuracy
from .config import ConfigError, RunConfig, load_config
from .data import DataFormatError, LabeledDataset, load_cifar, load_idx, synth_blobs
from .model import Model, build_mlp, build_small_conv
from .numcore import Tensor, no_grad
from .train import accuracy, train


def _data_path(p: str) -> str:
    if os.path.isabs(p):
        return p
    return os.path.join(os.environ.get("ETFW_DATA_DIR", "."), p)


def _load_datasets(cfg: RunConfig) -> tuple[LabeledDataset, LabeledDataset]:
    d = cfg.dataset
    name = d.get("name", "blobs")
    if name == "blobs":
        k = int(d.get("k", 3))
        p = int(d.get("p", 2))
        n = int(d.get("n_per_class", 200))
        spread = float(d.get("spread", 0.15))
        seed = int(d.get("seed", 0))
        train_ds = synth_blobs(k, p, n, spread, seed)
        test_ds = synth_blobs(k, p, max(20, n // 5), spread, seed + 1)
    elif name == "mnist":
        train_ds = load_idx(_data_path(d["images"]), _data_path(d["labels"]), name)
        test_ds = load_idx(_data_path(d["test_images"]), _data_path(d["test_labels"]), name)
    elif name in ("cifar10", "cifar100"):
        paths = [_data_path(p.strip()) for p in str(d["batches"]).split(",")]
        test_paths = [_data_path(p.strip()) for p in str(d["test_batches"]).split(",")]
        k = 100 if name == "cifar100" else 10
        train_ds = load_cifar(paths, name, k)
        test_ds = load_cifar(test_paths, name, k)
    else:
        raise ConfigError(f"unknown dataset {name!r}")
    if "limit" in d:
        train_ds = train_ds.subset(slice(0, int(d["limit"])))
    if "test_limit" in d:
        test_ds = test_ds.subset(slice(0, int(d["test_limit"])))
    return train_ds, test_ds


def _build_model(cfg: RunConfig, train_ds: LabeledDataset) -> Model:
    m = cfg.model
    arch = m.get("arch", "mlp")
    p = int(m.get("p", 64))
    activation = m.get("activation", "tanh")
    with_bias = bool(m.get("bias", False))
    k = train_ds.num_classes
    seed = cfg.train.seed
    if arch == "mlp":
        input_dim = int(np.prod(train_ds.inputs.shape[1:]))
        hidden = tuple(int(h) for h in str(m.get("hidden", "32")).split(",") if h)
        return build_mlp(input_dim, hidden, p, k, activation, s=cfg.train.s,
                         seed=seed, with_bias=with_bias)
    if arch == "smallconv":
        shape = train_ds.inputs.shape[1:]
        return build_small_conv(shape, p, k, activation, s=cfg.train.s,
                                seed=seed, with_bias=with_bias)
    raise ConfigError(f"unknown model arch {arch!r}")


def _echo_config(cfg: RunConfig) -> dict:
    return dict(cfg.raw)


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    train_ds, test_ds = _load_datasets(cfg)
    model = _build_model(cfg, train_ds)
    os.makedirs(cfg.output_dir, exist_ok=True)
    log_path = os.path.join(cfg.output_dir, "train_log.csv")
    ckpt_path = os.path.join(cfg.output_dir, "checkpoint.etfw")
    augment = bool(cfg.dataset.get("augment", False))
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "clean_train", "clean_test", "penalty", "min_angle_deg"])

        def log_fn(log):
            writer.writerow([log.epoch, f"{log.clean_train:.6f}", f"{log.clean_test:.6f}",
                             f"{log.penalty:.6e}", f"{log.min_angle_deg:.4f}"])
            print(f"epoch {log.epoch}: train {log.clean_train:.4f} "
                  f"test {log.clean_test:.4f} penalty {log.penalty:.4e} "
                  f"min_angle {log.min_angle_deg:.2f} deg")

        train(model, train_ds, cfg.train, test_ds=test_ds, augment=augment, log_fn=log_fn)
    checkpoint.save_model(ckpt_path, model)
    with open(os.path.join(cfg.output_dir, "config_echo.json"), "w") as fh:
        json.dump(_echo_config(cfg), fh, indent=2, sort_keys=True)
    print(f"checkpoint written to {ckpt_path}")
    return 0


def cmd_attack(args) -> int:
    cfg = load_config(args.config)
    _, test_ds = _load_datasets(cfg)
    if cfg.eval_limit:
        test_ds = test_ds.subset(slice(0, cfg.eval_limit))
    model = checkpoint.load_model(args.checkpoint, s=cfg.train.s)
    expected = _build_model(cfg, test_ds)
    if expected.arch_id != model.arch_id:
        print(f"error: checkpoint arch {model.arch_id!r} does not match "
              f"config arch {expected.arch_id!r}", file=sys.stderr)
        return 1
    os.makedirs(cfg.output_dir, exist_ok=True)

    target = geometry.gram_target(model.k, cfg.train.s)
    stats = geometry.angle_stats(model.classifier_w.data, target)
    report = {
        "seed": cfg.train.seed,
        "clean_accuracy": None,
        "robust_accuracy": {},
        "weight_geometry": {
            "min_pair_angle_deg": float(np.degrees(stats.min_pair_angle)),
            "max_pair_cos": stats.max_pair_cos,
            "penalty_frobenius": stats.penalty_value,
            "row_norms": stats.row_norms.tolist(),
        },
        "timings_sec": {},
        "config": _echo_config(cfg),
    }
    for atk in cfg.attacks:
        t0 = time.perf_counter()
        clean, robust = robust_accuracy(model, test_ds, atk)
        report["clean_accuracy"] = clean
        report["robust_accuracy"][atk.name] = robust
        report["timings_sec"][atk.name] = time.perf_counter() - t0
        print(f"{atk.name}: clean {clean:.4f} robust {robust:.4f}")
    json_path = os.path.join(cfg.output_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    with open(os.path.join(cfg.output_dir, "report.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "clean_accuracy", "robust_accuracy"])
        for name, robust in report["robust_accuracy"].items():
            writer.writerow([name, report["clean_accuracy"], robust])
    print(f"report written to {json_path}")
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(quick=args.quick)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  residual={r.residual:.3e}  "
              f"tol={r.tolerance:.0e}  [{r.detail}]")
        failures += not r.passed
    print(f"{len(results) - failures}/{len(results)} oracles passed")
    return 2 if failures else 0


def cmd_export_features(args) -> int:
    model = checkpoint.load_model(args.checkpoint)
    if args.dataset == "blobs":
        kind, _, rest = model.arch_id.partition(":")
        input_dim = int(rest.split("-")[0]) if kind == "mlp" else 2
        ds = synth_blobs(model.k, input_dim, 200, 0.15, 0)
    elif args.dataset == "mnist":
        ds = load_idx(_data_path("t10k-images-idx3-ubyte"),
                      _data_path("t10k-labels-idx1-ubyte"), "mnist")
    else:
        raise ConfigError(f"unknown dataset {args.dataset!r}")
    if args.limit:
        ds = ds.subset(slice(0, args.limit))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(model.p)])
        with no_grad():
            for start in range(0, len(ds), 512):
                x = ds.inputs[start : start + 512]
                f = model.features(Tensor(x)).data
                for row, label in zip(f, ds.labels[start : start + 512]):
                    writer.writerow([int(label)] + [f"{v:.8g}" for v in row])
    print(f"features written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="etfw",
                                     description="Weight-penalized robust classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", required=True)
    p_train.set_defaults(fn=cmd_train)

    p_attack = sub.add_parser("attack", help="evaluate attacks on a checkpoint")
    p_attack.add_argument("--config", required=True)
    p_attack.add_argument("--checkpoint", required=True)
    p_attack.set_defaults(fn=cmd_attack)

    p_verify = sub.add_parser("verify", help="run the math oracle suites")
    p_verify.add_argument("--quick", action="store_true")
    p_verify.set_defaults(fn=cmd_verify)

    p_export = sub.add_parser("export-features", help="dump latent features to CSV")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--dataset", required=True)
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--limit", type=int, default=0)
    p_export.set_defaults(fn=cmd_export_features)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DataFormatError, checkpoint.CheckpointError,
            FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
