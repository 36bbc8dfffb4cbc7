import json
import subprocess
import sys

import numpy as np
import pytest

from etfw import config as C

CLI = [sys.executable, "-m", "etfw.cli"]

BLOBS_TRAIN = """
dataset.name = blobs
dataset.k = 3
dataset.p = 2
dataset.n_per_class = 30
dataset.spread = 0.05
dataset.seed = 1
model.arch = mlp
model.hidden = 12
model.p = 4
model.activation = tanh
train.alpha = 100
train.s = 0.1
train.epochs = 15
train.batch_size = 16
train.seed = 0
output.dir = {out}
"""

ATTACK_SECTION = """
attack.0.kind = pgd
attack.0.eps = 0.1
attack.0.steps = 5
attack.0.step_size = 0.03
attack.1.kind = fgsm
attack.1.eps = 0.1
"""


def _run(*args, **kw):
    return subprocess.run(CLI + list(args), capture_output=True, text=True, **kw)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestParse:
    def test_round_trip_values(self):
        cfg = C.build_config(C.parse_kv(BLOBS_TRAIN.format(out="runs/x")))
        assert cfg.dataset["name"] == "blobs"
        assert cfg.dataset["k"] == 3
        assert cfg.train.alpha == 100.0
        assert cfg.train.epochs == 15
        assert cfg.output_dir == "runs/x"

    def test_unknown_key_rejected(self):
        with pytest.raises(C.ConfigError, match="train.alhpa"):
            C.build_config(C.parse_kv("train.alhpa = 100"))

    def test_duplicate_key_rejected(self):
        with pytest.raises(C.ConfigError, match="duplicate"):
            C.parse_kv("train.alpha = 1\ntrain.alpha = 2")

    def test_missing_equals_rejected(self):
        with pytest.raises(C.ConfigError, match="line 1"):
            C.parse_kv("train.alpha 100")

    def test_comments_and_blank_lines(self):
        kv = C.parse_kv("# comment\n\ntrain.alpha = 2.5\n")
        assert kv == {"train.alpha": 2.5}

    def test_attack_list(self):
        cfg = C.build_config(C.parse_kv("attack.0.kind = pgd\nattack.0.eps = 0.3\n"
                                        "attack.0.steps = 40\nattack.0.step_size = 0.01\n"
                                        "attack.1.kind = fgsm\nattack.1.eps = 0.3"))
        assert len(cfg.attacks) == 2
        assert cfg.attacks[0].kind == "pgd"
        assert cfg.attacks[0].epsilon == 0.3
        assert cfg.attacks[0].steps == 40
        assert cfg.attacks[0].name == "pgd40"
        assert cfg.attacks[1].kind == "fgsm"

    def test_decay_every_scales_with_epochs(self):
        cfg = C.build_config(C.parse_kv("train.epochs = 40"))
        assert cfg.train.decay_every == max(1, round(40 * 60 / 400))

    def test_explicit_decay_every_wins(self):
        cfg = C.build_config(C.parse_kv("train.epochs = 40\ntrain.decay_every = 7"))
        assert cfg.train.decay_every == 7


class TestCliTrain:
    def test_train_writes_artifacts(self, tmp_path):
        out = tmp_path / "run"
        cfg = _write(tmp_path, "t.cfg", BLOBS_TRAIN.format(out=out))
        r = _run("train", "--config", cfg)
        assert r.returncode == 0, r.stderr
        assert (out / "checkpoint.etfw").exists()
        log = (out / "train_log.csv").read_text().splitlines()
        assert log[0] == "epoch,clean_train,clean_test,penalty,min_angle_deg"
        assert len(log) == 16  # header + 15 epochs
        final = log[-1].split(",")
        assert float(final[1]) == 1.0  # separable blobs reach 100%

    def test_train_determinism_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = _write(tmp_path, f"{name}.cfg", BLOBS_TRAIN.format(out=out))
            r = _run("train", "--config", cfg)
            assert r.returncode == 0, r.stderr
            outs.append((out / "checkpoint.etfw").read_bytes())
        assert outs[0] == outs[1]

    def test_bad_config_exit_1(self, tmp_path):
        cfg = _write(tmp_path, "bad.cfg", "train.alhpa = 1\n")
        r = _run("train", "--config", cfg)
        assert r.returncode == 1
        assert "alhpa" in r.stderr

    def test_missing_config_exit_1(self):
        r = _run("train", "--config", "/nonexistent/cfg")
        assert r.returncode == 1


class TestCliAttack:
    @pytest.fixture()
    def trained(self, tmp_path):
        out = tmp_path / "run"
        cfg = _write(tmp_path, "t.cfg",
                     BLOBS_TRAIN.format(out=out) + ATTACK_SECTION)
        r = _run("train", "--config", cfg)
        assert r.returncode == 0, r.stderr
        return cfg, str(out / "checkpoint.etfw"), out

    def test_report_written_and_round_trips(self, trained):
        cfg, ckpt, out = trained
        r = _run("attack", "--config", cfg, "--checkpoint", ckpt)
        assert r.returncode == 0, r.stderr
        report = json.loads((out / "report.json").read_text())
        assert set(report["robust_accuracy"]) == {"pgd5", "fgsm"}
        for v in report["robust_accuracy"].values():
            assert v <= report["clean_accuracy"]
        # stable serialization round trip
        again = json.loads(json.dumps(report))
        assert again == report
        csv_lines = (out / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 3  # header + 2 attacks

    def test_null_attack_robust_equals_clean(self, tmp_path):
        out = tmp_path / "run"
        cfg = _write(
            tmp_path, "t.cfg",
            BLOBS_TRAIN.format(out=out)
            + "attack.0.kind = pgd\nattack.0.eps = 1e-12\n"
            + "attack.0.steps = 2\nattack.0.step_size = 1e-13\n",
        )
        assert _run("train", "--config", cfg).returncode == 0
        r = _run("attack", "--config", cfg,
                 "--checkpoint", str(out / "checkpoint.etfw"))
        assert r.returncode == 0, r.stderr
        report = json.loads((out / "report.json").read_text())
        assert report["robust_accuracy"]["pgd2"] == report["clean_accuracy"]

    def test_arch_mismatch_exit_1(self, trained, tmp_path):
        cfg, ckpt, out = trained
        other = tmp_path / "other.cfg"
        other.write_text(
            BLOBS_TRAIN.format(out=tmp_path / "o").replace(
                "model.p = 4", "model.p = 6"
            )
            + ATTACK_SECTION
        )
        r = _run("attack", "--config", str(other), "--checkpoint", ckpt)
        assert r.returncode == 1
        assert "arch" in r.stderr.lower()


class TestCliVerify:
    def test_quick_verify_passes(self):
        r = _run("verify", "--quick")
        assert r.returncode == 0, r.stdout + r.stderr
        assert "FAIL" not in r.stdout
        assert "PASS" in r.stdout


class TestCliExport:
    def test_export_features(self, tmp_path):
        out = tmp_path / "run"
        cfg = _write(tmp_path, "t.cfg", BLOBS_TRAIN.format(out=out))
        assert _run("train", "--config", cfg).returncode == 0
        feat = tmp_path / "features.csv"
        r = _run("export-features", "--checkpoint",
                 str(out / "checkpoint.etfw"), "--dataset", "blobs",
                 "--out", str(feat))
        assert r.returncode == 0, r.stderr
        lines = feat.read_text().splitlines()
        assert lines[0] == "label," + ",".join(f"f{i}" for i in range(4))
        vals = np.array([l.split(",")[1:] for l in lines[1:]], dtype=float)
        assert np.all(np.abs(vals) < 1.0)  # tanh range
