import numpy as np
import pytest

from etfw import attacks as A
from etfw import model as M
from etfw.data import LabeledDataset, synth_blobs
from etfw.numcore import Tensor
from etfw.train import train


def _linear_model(w, k=None):
    """Identity encoder + explicit classifier matrix: logits = W x."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    k, p = w.shape
    net = M.build_mlp(p, (), p=p, k=k, activation="tanh", seed=0)
    # make the 'encoder' a plain identity passthrough (linear, no squash)
    net.layers[0].w.data[:] = np.eye(p)
    net.final_activation = "relu"  # replaced below by identity trick
    net.classifier_w.data[:] = w
    return net


class _IdentityFeatureModel:
    """Truly affine logits = W x, for closed-form oracles."""

    def __init__(self, w):
        self.w = np.atleast_2d(np.asarray(w, dtype=float))
        self.k, self.p = self.w.shape
        self.classifier_w = Tensor(self.w.copy(), requires_grad=True)
        self.arch_id = f"mlp:{self.p}-p{self.p}-k{self.k}-tanh"

    def features(self, x):
        return x

    def logits(self, x):
        return x @ Tensor(self.w.T)

    def predict(self, x):
        arr = x if isinstance(x, np.ndarray) else x.data
        return np.argmax(arr @ self.w.T, axis=1)

    def parameters(self):
        return {"classifier.w": self.classifier_w}

    def zero_grad(self):
        pass


def _trained_blob_model(seed=0):
    ds = synth_blobs(3, 2, 30, 0.05, seed=seed)
    net = M.build_mlp(2, (12,), p=4, k=3, activation="tanh", seed=seed)
    cfg = M.TrainConfig(alpha=100.0, epochs=15, batch_size=16, seed=seed)
    train(net, ds, cfg)
    return net, ds


class TestFgsm:
    def test_zero_gradient_fixed_point(self):
        net = _IdentityFeatureModel(np.zeros((2, 3)))
        x = np.full((1, 3), 0.5)
        x_adv = A.fgsm_batch(net, x, np.array([0]), 0.3)
        assert np.array_equal(x_adv, x)

    def test_linear_closed_form(self):
        # logits (w x, 0); true label 0 -> loss increases as x decreases
        net = _IdentityFeatureModel([[2.0], [0.0]])
        x = np.array([[0.7]])
        x_adv = A.fgsm_batch(net, x, np.array([0]), 0.2)
        assert np.allclose(x_adv, 0.5)
        # label 1: gradient points the other way, clamp at 1
        x_adv = A.fgsm_batch(net, np.array([[0.9]]), np.array([1]), 0.2)
        assert np.allclose(x_adv, 1.0)

    def test_ball_and_box_invariant_random(self):
        rng = np.random.default_rng(0)
        for i in range(100):
            net = M.build_mlp(3, (5,), p=4, k=3, activation="tanh", seed=i)
            x = rng.uniform(size=(2, 3))
            eps = float(rng.uniform(0.01, 0.5))
            x_adv = A.fgsm_batch(net, x, rng.integers(0, 3, size=2), eps)
            assert np.max(np.abs(x_adv - x)) <= eps + 1e-9
            assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0


class TestPgd:
    def test_reduces_to_fgsm(self):
        net, ds = _trained_blob_model()
        x, y = ds.inputs[:8], ds.labels[:8]
        cfg = A.AttackConfig(kind="pgd", epsilon=0.1, steps=1, step_size=0.1,
                             random_start=False)
        assert np.array_equal(
            A.pgd_batch(net, x, y, cfg), A.fgsm_batch(net, x, y, 0.1)
        )

    def test_linear_worst_case(self):
        # monotone 1-D logit: PGD must saturate at max(x - eps, 0)
        net = _IdentityFeatureModel([[3.0], [0.0]])
        x = np.array([[0.25], [0.05]])
        cfg = A.AttackConfig(kind="pgd", epsilon=0.1, steps=10, step_size=0.03,
                             random_start=False)
        x_adv = A.pgd_batch(net, x, np.array([0, 0]), cfg)
        assert np.allclose(x_adv, [[0.15], [0.0]])

    def test_random_start_deterministic_per_sample(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="pgd", epsilon=0.1, steps=3, step_size=0.05,
                             random_start=True, seed=5)
        x, y = ds.inputs[:4], ds.labels[:4]
        a = A.pgd_batch(net, x, y, cfg, sample_ids=np.arange(4))
        b = A.pgd_batch(net, x, y, cfg, sample_ids=np.arange(4))
        assert np.array_equal(a, b)
        # per-sample seeding: attacking a subset gives identical rows
        c = A.pgd_batch(net, x[1:3], y[1:3], cfg, sample_ids=np.arange(1, 3))
        assert np.array_equal(a[1:3], c)

    def test_ball_and_box_invariant_random(self):
        rng = np.random.default_rng(1)
        net = M.build_mlp(3, (5,), p=4, k=3, activation="relu", seed=0)
        for i in range(50):
            x = rng.uniform(size=(3, 3))
            eps = float(rng.uniform(0.01, 0.4))
            cfg = A.AttackConfig(kind="pgd", epsilon=eps, steps=5,
                                 step_size=eps / 2, seed=i)
            x_adv = A.pgd_batch(net, x, rng.integers(0, 3, size=3), cfg,
                                sample_ids=np.arange(3))
            assert np.max(np.abs(x_adv - x)) <= eps + 1e-9
            assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0


class TestDeepfool:
    def test_affine_l2_distance(self):
        # rows differ by (3,-4): distance from x=(1,0) to the boundary is 3/5
        net = _IdentityFeatureModel([[3.0, 4.0], [0.0, 8.0]])
        x = np.array([[1.0, 0.0]])
        cfg = A.AttackConfig(kind="deepfool", norm="l2", epsilon=1.0,
                             steps=50, overshoot=0.02)
        res = A.deepfool(net, x[0], cfg)
        assert res.success
        assert res.iterations_used <= 2
        assert abs(res.perturbation_norm - 0.6) <= 0.025 * 0.6 + 1e-6

    def test_already_misclassified_returns_input(self):
        net = _IdentityFeatureModel([[1.0, 0.0], [0.0, 1.0]])
        x = np.array([0.2, 0.8])
        cfg = A.AttackConfig(kind="deepfool", norm="l2", epsilon=1.0)
        res = A.deepfool(net, x, cfg)
        # clean label is the model's own prediction, so DeepFool must move it
        assert res.perturbation_norm >= 0.0

    def test_linf_variant_respects_ball(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="deepfool", norm="linf", epsilon=0.15,
                             steps=50, overshoot=0.02)
        for i in range(6):
            res = A.deepfool(net, ds.inputs[i], cfg)
            d = res.x_adv - ds.inputs[i]
            assert np.max(np.abs(d)) <= cfg.epsilon + 1e-9
            assert res.x_adv.min() >= 0.0 and res.x_adv.max() <= 1.0

    def test_terminates_on_affine_quickly(self):
        net = _IdentityFeatureModel([[1.0, -2.0], [-1.0, 2.0]])
        cfg = A.AttackConfig(kind="deepfool", norm="l2", epsilon=5.0)
        res = A.deepfool(net, np.array([0.9, 0.1]), cfg)
        assert res.iterations_used <= 2


class TestCw:
    def test_lower_bound_on_linear_model(self):
        # margin/||w|| is the geometric minimum; CW cannot beat it
        w = np.array([[3.0, 4.0], [0.0, 8.0]])
        net = _IdentityFeatureModel(w)
        x = np.array([[0.8, 0.3]])
        margin = float(w[0] @ x[0] - w[1] @ x[0])
        dist = margin / np.linalg.norm(w[0] - w[1])
        cfg = A.AttackConfig(kind="cw", norm="l2", epsilon=10.0, steps=200,
                             step_size=0.01)
        res = A.cw_l2(net, x[0], 0, cfg)
        assert res.success
        assert res.perturbation_norm >= dist - 1e-3

    def test_ball_box_and_budget(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="cw", norm="l2", epsilon=3.0, steps=100,
                             step_size=0.01)
        res = A.cw_l2(net, ds.inputs[0], int(ds.labels[0]), cfg)
        assert res.x_adv.min() >= 0.0 and res.x_adv.max() <= 1.0
        if res.success:
            assert np.linalg.norm(res.x_adv - ds.inputs[0]) <= cfg.epsilon + 1e-9

    def test_reported_norm_matches_x_adv(self):
        net, ds = _trained_blob_model(seed=1)
        cfg = A.AttackConfig(kind="cw", norm="l2", epsilon=3.0, steps=60,
                             step_size=0.01)
        res = A.cw_l2(net, ds.inputs[0], int(ds.labels[0]), cfg)
        actual = float(np.linalg.norm(res.x_adv - ds.inputs[0]))
        assert abs(actual - res.perturbation_norm) < 1e-9


class TestMta:
    def test_two_class_equals_targeted_pgd(self):
        ds = synth_blobs(2, 2, 20, 0.05, seed=3)
        net = M.build_mlp(2, (8,), p=3, k=2, activation="tanh", seed=3)
        train(net, ds, M.TrainConfig(alpha=100.0, epochs=10, batch_size=16, seed=3))
        cfg = A.AttackConfig(kind="mta", epsilon=0.2, steps=5, step_size=0.05,
                             random_start=False, seed=0)
        x, y = ds.inputs[:6], ds.labels[:6]
        got = A.mta_batch(net, x, y, cfg, sample_ids=np.arange(6))
        want = A.pgd_batch(net, x, y, cfg, targets=1 - y, sample_ids=np.arange(6))
        assert np.array_equal(got, want)

    def test_ball_invariant(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="mta", epsilon=0.1, steps=4, step_size=0.04,
                             seed=2)
        x_adv = A.mta_batch(net, ds.inputs[:5], ds.labels[:5], cfg,
                            sample_ids=np.arange(5))
        assert np.max(np.abs(x_adv - ds.inputs[:5])) <= cfg.epsilon + 1e-9
        assert x_adv.min() >= 0.0 and x_adv.max() <= 1.0


class TestRobustAccuracy:
    def test_null_attack_equals_clean(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="pgd", epsilon=1e-12, steps=2,
                             step_size=1e-13, seed=0)
        clean, robust = A.robust_accuracy(net, ds, cfg)
        assert robust == clean

    def test_conjunction_bound(self):
        net, ds = _trained_blob_model()
        for kind in ("fgsm", "pgd", "mta"):
            cfg = A.AttackConfig(kind=kind, epsilon=0.3, steps=5,
                                 step_size=0.1, seed=0)
            clean, robust = A.robust_accuracy(net, ds.subset(20), cfg)
            assert robust <= clean

    def test_constant_model(self):
        net = _IdentityFeatureModel(np.zeros((2, 3)))
        rng = np.random.default_rng(0)
        ds = LabeledDataset(
            inputs=rng.uniform(size=(40, 3)),
            labels=np.tile([0, 1], 20),
            num_classes=2,
            name="bal",
        )
        cfg = A.AttackConfig(kind="pgd", epsilon=0.1, steps=3, step_size=0.05,
                             seed=0)
        clean, robust = A.robust_accuracy(net, ds, cfg)
        assert clean == 0.5
        assert robust == clean

    def test_deterministic(self):
        net, ds = _trained_blob_model()
        cfg = A.AttackConfig(kind="pgd", epsilon=0.15, steps=5,
                             step_size=0.05, seed=7)
        assert A.robust_accuracy(net, ds.subset(15), cfg) == A.robust_accuracy(
            net, ds.subset(15), cfg
        )

    def test_deepfool_and_cw_paths(self):
        net, ds = _trained_blob_model()
        for kind, norm, eps in (("deepfool", "linf", 0.1), ("cw", "l2", 3.0)):
            cfg = A.AttackConfig(kind=kind, norm=norm, epsilon=eps, steps=30,
                                 step_size=0.01, seed=0)
            clean, robust = A.robust_accuracy(net, ds.subset(6), cfg)
            assert 0.0 <= robust <= clean <= 1.0


class TestConfig:
    def test_auto_name(self):
        assert A.AttackConfig(kind="pgd", steps=20).name == "pgd20"

    def test_validation(self):
        with pytest.raises(ValueError):
            A.AttackConfig(kind="pgd", epsilon=-0.1)
        with pytest.raises(ValueError):
            A.AttackConfig(kind="pgd", steps=0)
        with pytest.raises(ValueError):
            A.AttackConfig(kind="nope")
