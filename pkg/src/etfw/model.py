"""Feedforward classifiers with a penalized classification layer.

Encoders are stacks of dense or conv blocks ending in a selectable final
activation; the classifier is a bias-free K x P matrix trained with softmax
cross-entropy plus the equiangular Gram penalty. The architectures are
desk-scale: an MLP and a small 4-conv network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .numcore import Tensor, conv2d, logsumexp, max_pool2d, prelu

ACTIVATIONS = ("tanh", "relu", "prelu", "leaky_relu")


@dataclass
class TrainConfig:
    alpha: float = 100.0
    s: float = 0.1
    lr: float = 0.01
    lr_decay: float = 0.9
    decay_every: int = 60
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    # plain Frobenius dominates the SCE gradient under Adam regardless of the
    # residual scale, which is what actually drives W W^T to the target;
    # squared-frobenius is smooth at zero but stalls, kept as an option
    penalty_norm: str = "frobenius"  # or "squared-frobenius"
    adv_training: dict | None = None  # PGD params for the Madry baseline

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.penalty_norm not in ("frobenius", "squared-frobenius"):
            raise ValueError(f"unknown penalty norm {self.penalty_norm!r}")


class Dense:
    def __init__(self, w: Tensor, b: Tensor):
        self.w, self.b = w, b

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        return x @ self.w + self.b

    def params(self):
        return {"w": self.w, "b": self.b}


class Conv:
    def __init__(self, w: Tensor, b: Tensor, stride: int = 1, padding: int = 1):
        self.w, self.b = w, b
        self.stride, self.padding = stride, padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding).relu()

    def params(self):
        return {"w": self.w, "b": self.b}


class Pool:
    def __init__(self, k: int = 2):
        self.k = k

    def __call__(self, x: Tensor) -> Tensor:
        return max_pool2d(x, self.k)

    def params(self):
        return {}


class Model:
    """Encoder layers + final activation + bias-free linear classifier."""

    def __init__(self, arch_id: str, layers, final_activation: str, classifier_w: Tensor,
                 classifier_b: Tensor | None = None, prelu_slope: Tensor | None = None):
        if final_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {final_activation!r}")
        self.arch_id = arch_id
        self.layers = layers
        self.final_activation = final_activation
        self.classifier_w = classifier_w
        self.classifier_b = classifier_b
        if final_activation == "prelu" and prelu_slope is None:
            prelu_slope = Tensor(0.25, requires_grad=True)
        self.prelu_slope = prelu_slope

    @property
    def k(self) -> int:
        return self.classifier_w.shape[0]

    @property
    def p(self) -> int:
        return self.classifier_w.shape[1]

    def _activate(self, h: Tensor) -> Tensor:
        if self.final_activation == "tanh":
            return h.tanh()
        if self.final_activation == "relu":
            return h.relu()
        if self.final_activation == "leaky_relu":
            return h.leaky_relu(0.01)
        return prelu(h, self.prelu_slope)

    def features(self, x: Tensor) -> Tensor:
        h = x
        for layer in self.layers:
            h = layer(h)
        return self._activate(h)

    def forward(self, x: Tensor):
        f = self.features(x)
        logits = f @ self.classifier_w.T
        if self.classifier_b is not None:
            logits = logits + self.classifier_b
        return f, logits

    def logits(self, x: Tensor) -> Tensor:
        return self.forward(x)[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        from .numcore import no_grad

        with no_grad():
            logits = self.logits(Tensor(x))
        return np.argmax(logits.data, axis=1)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, t in layer.params().items():
                out[f"layer{i}.{name}"] = t
        out["classifier.w"] = self.classifier_w
        if self.classifier_b is not None:
            out["classifier.b"] = self.classifier_b
        if self.final_activation == "prelu":
            out["prelu.slope"] = self.prelu_slope
        return out

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.zero_grad()


# -- builders ------------------------------------------------------------------


def _fan_in_uniform(rng, fan_in, shape):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_classifier(rng, k, p, s):
    # start near the simplex factorization, perturbed so the weights stay learnable
    w = geometry.factor_gram(k, p, s)
    return w + rng.normal(scale=0.01 * s, size=w.shape)


def build_mlp(input_dim: int, hidden: tuple[int, ...], p: int, k: int,
              activation: str = "tanh", s: float = 0.1, seed: int = 0,
              with_bias: bool = False) -> Model:
    rng = np.random.default_rng((seed, 0xE7F))
    dims = (input_dim, *hidden, p)
    layers = []
    for i in range(len(dims) - 1):
        w = Tensor(_fan_in_uniform(rng, dims[i], (dims[i], dims[i + 1])), requires_grad=True)
        b = Tensor(np.zeros(dims[i + 1]), requires_grad=True)
        layers.append(Dense(w, b))
        if i < len(dims) - 2:
            layers.append(_HiddenRelu())
    cw = Tensor(_init_classifier(rng, k, p, s), requires_grad=True)
    cb = Tensor(np.zeros(k), requires_grad=True) if with_bias else None
    arch = f"mlp:{input_dim}-{'-'.join(map(str, hidden))}-p{p}-k{k}-{activation}"
    return Model(arch, layers, activation, cw, classifier_b=cb)


class _HiddenRelu:
    def __call__(self, x: Tensor) -> Tensor:
        return x.relu()

    def params(self):
        return {}


def build_small_conv(in_shape: tuple[int, int, int] = (1, 28, 28), p: int = 64, k: int = 10,
                     activation: str = "tanh", s: float = 0.1, seed: int = 0,
                     with_bias: bool = False) -> Model:
    """The 4-conv small network: 32,32 / pool / 64,64 / pool / dense-to-P."""
    rng = np.random.default_rng((seed, 0xE7F))
    c, h, w = in_shape
    chans = (c, 32, 32, 64, 64)
    layers = []
    for i in range(4):
        fan_in = chans[i] * 9
        cw = Tensor(_fan_in_uniform(rng, fan_in, (chans[i + 1], chans[i], 3, 3)), requires_grad=True)
        cb = Tensor(np.zeros(chans[i + 1]), requires_grad=True)
        layers.append(Conv(cw, cb, padding=1))
        if i % 2 == 1:
            layers.append(Pool(2))
    flat = chans[-1] * (h // 4) * (w // 4)
    dw = Tensor(_fan_in_uniform(rng, flat, (flat, p)), requires_grad=True)
    db = Tensor(np.zeros(p), requires_grad=True)
    layers.append(Dense(dw, db))
    clw = Tensor(_init_classifier(rng, k, p, s), requires_grad=True)
    clb = Tensor(np.zeros(k), requires_grad=True) if with_bias else None
    arch = f"smallconv:{c}x{h}x{w}-p{p}-k{k}-{activation}"
    return Model(arch, layers, activation, clw, classifier_b=clb)


def build_from_arch_id(arch_id: str, s: float = 0.1, seed: int = 0) -> Model:
    """Reconstruct an architecture from its id string (checkpoint loading)."""
    kind, _, rest = arch_id.partition(":")
    parts = rest.split("-")
    activation = parts[-1]
    k = int(parts[-2][1:])
    p = int(parts[-3][1:])
    if kind == "mlp":
        input_dim = int(parts[0])
        hidden = tuple(int(x) for x in parts[1:-3])
        return build_mlp(input_dim, hidden, p, k, activation, s=s, seed=seed)
    if kind == "smallconv":
        c, h, w = (int(x) for x in parts[0].split("x"))
        return build_small_conv((c, h, w), p, k, activation, s=s, seed=seed)
    raise ValueError(f"unknown arch id {arch_id!r}")


# -- classification and losses ---------------------------------------------------


def region_classify(w: np.ndarray, f: np.ndarray) -> int:
    """Class of a feature by the pairwise half-space inequalities, lowest index
    winning ties; provably the argmax of W f when the bias is zero."""
    k = w.shape[0]
    for i in range(k):
        diffs = w[i] - w
        if np.all(diffs @ f >= 0):
            return i
    # floating-point ties can leave every strict test short; fall back to argmax
    return int(np.argmax(w @ f))


def sce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy, via log-sum-exp."""
    labels = np.asarray(labels)
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels out of range [0, {k})")
    lse = logsumexp(logits, axis=1)
    picked = logits[np.arange(len(labels)), labels]
    return (lse - picked).mean()


def penalty_term(classifier_w: Tensor, target: geometry.GramTarget, norm: str) -> Tensor:
    """Differentiable ||W W^T - Sigma|| (Frobenius or squared Frobenius)."""
    diff = classifier_w @ classifier_w.T - Tensor(target.sigma)
    sq = (diff * diff).sum()
    return sq if norm == "squared-frobenius" else sq.sqrt()


def total_loss(model: Model, x: Tensor, labels: np.ndarray, cfg: TrainConfig) -> Tensor:
    """Cross-entropy plus alpha times the Gram penalty; differentiable in all
    parameters and in the input."""
    _, logits = model.forward(x)
    loss = sce_loss(logits, labels)
    if cfg.alpha > 0:
        target = geometry.gram_target(model.k, cfg.s)
        loss = loss + cfg.alpha * penalty_term(model.classifier_w, target, cfg.penalty_norm)
    return loss


# -- optimizer -------------------------------------------------------------------


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name}")
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1**self.t)
            v_hat = self.v[name] / (1 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


# -- the ReLU failure construction ------------------------------------------------


@dataclass
class ActivationDemo:
    headings_deg: tuple
    relu_per_class_accuracy: np.ndarray
    relu_prediction_counts: np.ndarray
    tanh_per_class_accuracy: np.ndarray
    tanh_prediction_counts: np.ndarray


def relu_failure_demo(n_per_class: int = 200, seed: int = 7) -> ActivationDemo:
    """Fixed equiangular K=3, P=2 classifier at headings 90/210/330 degrees.

    With nonnegative (relu) features the 210-degree class can never win a
    pairwise comparison against the 90-degree row, so it receives zero
    predictions; with tanh features every class is reachable.
    """
    headings = (90.0, 210.0, 330.0)
    rad = np.radians(headings)
    w = np.stack([np.cos(rad), np.sin(rad)], axis=1)

    rng = np.random.default_rng(seed)
    raw = []
    labels = []
    for i in range(3):
        pts = 2.0 * w[i] + rng.normal(scale=0.5, size=(n_per_class, 2))
        raw.append(pts)
        labels.append(np.full(n_per_class, i))
    raw = np.concatenate(raw)
    labels = np.concatenate(labels)

    def evaluate(features):
        preds = np.array([region_classify(w, f) for f in features])
        counts = np.bincount(preds, minlength=3)
        acc = np.array([np.mean(preds[labels == i] == i) for i in range(3)])
        return acc, counts

    relu_acc, relu_counts = evaluate(np.maximum(raw, 0.0))
    tanh_acc, tanh_counts = evaluate(np.tanh(raw))
    return ActivationDemo(headings, relu_acc, relu_counts, tanh_acc, tanh_counts)
