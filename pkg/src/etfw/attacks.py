"""White-box attacks (FGSM, PGD, DeepFool, C&W l2, multi-target) and the
robust-accuracy evaluation convention.

All attacks keep adversarial candidates inside the [0,1] pixel box; l-inf
attacks additionally project into the epsilon ball around the clean input.
Batched drivers exist for the sign-gradient family; DeepFool and C&W run per
sample. A sample counts as robust only if it is classified correctly both
clean and after the attack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, sce_loss
from .numcore import Tensor, no_grad


@dataclass
class AttackConfig:
    kind: str  # fgsm | pgd | deepfool | cw | mta
    norm: str = "linf"
    epsilon: float = 0.3
    steps: int = 40
    step_size: float = 0.01
    overshoot: float = 0.02
    random_start: bool = True
    cw_search_steps: int = 9
    cw_confidence: float = 0.0
    cw_initial_const: float = 1e-2
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("fgsm", "pgd", "deepfool", "cw", "mta"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.norm not in ("linf", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.epsilon < 0 or self.steps < 1 or self.step_size <= 0:
            raise ValueError("invalid attack budget/iteration parameters")
        if not self.name:
            self.name = f"{self.kind}{self.steps}" if self.kind != "fgsm" else "fgsm"


@dataclass
class AttackResult:
    x_adv: np.ndarray
    success: bool
    perturbation_norm: float
    iterations_used: int


def _pert_norm(delta: np.ndarray, norm: str) -> float:
    if norm == "linf":
        return float(np.max(np.abs(delta))) if delta.size else 0.0
    return float(np.linalg.norm(delta.ravel()))


def input_gradient(model: Model, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d L_SCE / d x for a batch."""
    xt = Tensor(x, requires_grad=True)
    loss = sce_loss(model.logits(xt), y)
    loss.backward()
    return xt.grad


# -- sign-gradient family -------------------------------------------------------


def fgsm_batch(model: Model, x: np.ndarray, y: np.ndarray, epsilon: float) -> np.ndarray:
    g = input_gradient(model, x, y)
    return np.clip(x + epsilon * np.sign(g), 0.0, 1.0)


def pgd_batch(model: Model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
              targets: np.ndarray | None = None, sample_ids=None) -> np.ndarray:
    """l-inf PGD; with ``targets`` it descends the loss toward those labels."""
    eps, step = cfg.epsilon, cfg.step_size
    x_adv = x.copy()
    if cfg.random_start and eps > 0:
        ids = sample_ids if sample_ids is not None else range(len(x))
        for i, sid in enumerate(ids):
            rng = np.random.default_rng((cfg.seed, int(sid)))
            x_adv[i] += rng.uniform(-eps, eps, size=x.shape[1:])
        x_adv = np.clip(x_adv, 0.0, 1.0)
    for _ in range(cfg.steps):
        if targets is None:
            g = input_gradient(model, x_adv, y)
            x_adv = x_adv + step * np.sign(g)
        else:
            g = input_gradient(model, x_adv, targets)
            x_adv = x_adv - step * np.sign(g)
        x_adv = np.clip(x_adv, x - eps, x + eps)
        x_adv = np.clip(x_adv, 0.0, 1.0)
    return x_adv


def mta_batch(model: Model, x: np.ndarray, y: np.ndarray, cfg: AttackConfig,
              sample_ids=None) -> np.ndarray:
    """Best-of-(K-1) targeted PGD; keeps the first successful target per sample."""
    k = model.k
    x_adv = x.copy()
    done = np.zeros(len(x), dtype=bool)
    for t in range(k):
        live = (~done) & (y != t)
        if not np.any(live):
            continue
        targets = np.full(int(live.sum()), t)
        ids = (np.asarray(sample_ids)[live] if sample_ids is not None else np.flatnonzero(live))
        cand = pgd_batch(model, x[live], y[live], cfg, targets=targets, sample_ids=ids)
        preds = model.predict(cand)
        hit = preds != y[live]
        live_idx = np.flatnonzero(live)
        # keep the latest candidate for still-unbroken samples so the
        # degenerate K=2 case reduces exactly to targeted PGD
        x_adv[live_idx] = cand
        done[live_idx[hit]] = True
    return x_adv


# -- DeepFool ---------------------------------------------------------------------


def _logit_gradients(model: Model, x: np.ndarray):
    """Logits and per-class input gradients at a single sample."""
    k = model.k
    grads = []
    logits_val = None
    for j in range(k):
        xt = Tensor(x[None], requires_grad=True)
        logits = model.logits(xt)
        logits_val = logits.data[0]
        logits[0, j].backward()
        grads.append(xt.grad[0].copy())
    return logits_val, np.stack(grads)


def deepfool(model: Model, x: np.ndarray, cfg: AttackConfig) -> AttackResult:
    """Iterative linearization toward the nearest class boundary."""
    label = int(model.predict(x[None])[0])
    r_tot = np.zeros_like(x)
    overshoot = cfg.overshoot
    iters = 0
    x_cur = x.copy()
    for iters in range(cfg.steps):
        pred = int(model.predict(x_cur[None])[0])
        if pred != label:
            break
        logits, grads = _logit_gradients(model, x_cur)
        best_pert, best_delta = np.inf, None
        for j in range(model.k):
            if j == label:
                continue
            l_j = logits[j] - logits[label]
            g_j = grads[j] - grads[label]
            if cfg.norm == "l2":
                q = np.linalg.norm(g_j.ravel())
                if q < 1e-12:
                    continue
                pert = abs(l_j) / q
                delta = (abs(l_j) + 1e-8) * g_j / q**2
            else:
                q = np.abs(g_j).sum()
                if q < 1e-12:
                    continue
                pert = abs(l_j) / q
                delta = (abs(l_j) + 1e-8) * np.sign(g_j) / q * 1.0
            if pert < best_pert:
                best_pert, best_delta = pert, delta
        if best_delta is None:
            break
        r_tot = r_tot + best_delta
        x_cur = np.clip(x + (1 + overshoot) * r_tot, 0.0, 1.0)
    else:
        iters = cfg.steps

    delta = x_cur - x
    if cfg.norm == "linf" and cfg.epsilon > 0:
        # keep the linf invariant: project back into the budget ball
        delta = np.clip(delta, -cfg.epsilon, cfg.epsilon)
        x_cur = np.clip(x + delta, 0.0, 1.0)
        delta = x_cur - x
    final_pred = int(model.predict(x_cur[None])[0])
    pnorm = _pert_norm(delta, cfg.norm)
    success = final_pred != label and (cfg.norm == "linf" or pnorm <= cfg.epsilon)
    return AttackResult(x_cur, success, pnorm, iters)


# -- Carlini & Wagner l2 ------------------------------------------------------------


def _cw_objective(model: Model, w: Tensor, x0: np.ndarray, y: int, c: float, kappa: float):
    """Distortion + c * hinge margin, on the tanh-reparametrized candidate."""
    x_adv = (w.tanh() + 1.0) * 0.5
    diff = x_adv - Tensor(x0)
    dist = (diff * diff).sum()
    logits = model.logits(x_adv.reshape(1, *x0.shape))
    lv = logits.data[0]
    others = np.delete(np.arange(model.k), y)
    j = others[np.argmax(lv[others])]
    margin = logits[0, y] - logits[0, int(j)]
    if float(margin.data) > -kappa:
        obj = dist + c * margin
    else:
        obj = dist
    return obj, x_adv.data, lv


def cw_l2(model: Model, x: np.ndarray, y: int, cfg: AttackConfig) -> AttackResult:
    """C&W l2: gradient descent on the tanh-space objective, binary search on c."""
    y = int(y)
    x0 = np.clip(x, 1e-6, 1 - 1e-6)
    w_init = np.arctanh(2 * x0 - 1)
    kappa = cfg.cw_confidence
    lo, hi = 0.0, np.inf
    c = cfg.cw_initial_const
    best_adv, best_norm = None, np.inf
    iters = 0
    for _ in range(cfg.cw_search_steps):
        w = Tensor(w_init.copy(), requires_grad=True)
        found = False
        for _ in range(cfg.steps):
            iters += 1
            w.zero_grad()
            obj, x_adv, lv = _cw_objective(model, w, x, y, c, kappa)
            obj.backward()
            preds = np.argmax(lv)
            if preds != y:
                found = True
                norm = np.linalg.norm((x_adv - x).ravel())
                if norm < best_norm:
                    best_norm, best_adv = norm, x_adv.copy()
            w.data -= cfg.step_size * w.grad
        if found:
            hi = c
            c = (lo + hi) / 2
        else:
            lo = c
            c = c * 10 if np.isinf(hi) else (lo + hi) / 2
        if c > 1e10:
            break
    if best_adv is None:
        return AttackResult(x.copy(), False, 0.0, iters)
    success = best_norm <= cfg.epsilon
    return AttackResult(best_adv, success, float(best_norm), iters)


# -- single-sample front door and evaluation -----------------------------------------


def run_attack(model: Model, x: np.ndarray, y: int, cfg: AttackConfig,
               sample_id: int = 0) -> AttackResult:
    """Attack one sample; dispatches on cfg.kind."""
    y_arr = np.array([int(y)])
    if cfg.kind == "fgsm":
        x_adv = fgsm_batch(model, x[None], y_arr, cfg.epsilon)[0]
    elif cfg.kind == "pgd":
        x_adv = pgd_batch(model, x[None], y_arr, cfg, sample_ids=[sample_id])[0]
    elif cfg.kind == "mta":
        x_adv = mta_batch(model, x[None], y_arr, cfg, sample_ids=[sample_id])[0]
    elif cfg.kind == "deepfool":
        return deepfool(model, x, cfg)
    else:
        return cw_l2(model, x, y, cfg)
    pred = int(model.predict(x_adv[None])[0])
    delta = x_adv - x
    return AttackResult(x_adv, pred != int(y), _pert_norm(delta, cfg.norm), cfg.steps)


def robust_accuracy(model: Model, dataset, cfg: AttackConfig) -> tuple[float, float]:
    """(clean accuracy, robust accuracy): robust requires correct clean AND
    correct after the attack, so robust <= clean exactly."""
    x, y = dataset.inputs, dataset.labels
    with no_grad():
        clean_pred = model.predict(x)
    clean_ok = clean_pred == y
    clean_acc = float(clean_ok.mean())
    idx = np.flatnonzero(clean_ok)
    if len(idx) == 0:
        return clean_acc, 0.0

    if cfg.kind in ("fgsm", "pgd", "mta"):
        xs, ys = x[idx], y[idx]
        if cfg.kind == "fgsm":
            x_adv = fgsm_batch(model, xs, ys, cfg.epsilon)
        elif cfg.kind == "pgd":
            x_adv = pgd_batch(model, xs, ys, cfg, sample_ids=idx)
        else:
            x_adv = mta_batch(model, xs, ys, cfg, sample_ids=idx)
        adv_ok = model.predict(x_adv) == ys
    else:
        adv_ok = np.zeros(len(idx), dtype=bool)
        for i, sid in enumerate(idx):
            res = run_attack(model, x[sid], int(y[sid]), cfg, sample_id=int(sid))
            adv_ok[i] = not res.success
    robust_acc = float(adv_ok.sum() / len(x))
    return clean_acc, robust_acc
