"""Numerical oracle suites for the weight-geometry theory.

Each check recomputes a closed-form claim with an independent generic method
(LU determinants, eigendecompositions, finite differences, projected search)
and reports the residual against its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .model import TrainConfig, build_mlp, total_loss
from .numcore import Tensor, grad_check


@dataclass
class OracleResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""


def check_determinant_identity(trials: int = 200, seed: int = 0) -> OracleResult:
    """Closed-form structured determinant vs numpy's LU determinant."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        a, b = rng.uniform(-5, 5, size=2)
        m = np.full((n, n), b)
        np.fill_diagonal(m, a)
        generic = float(np.linalg.det(m))
        closed = geometry.structured_det(n, a, b)
        rel = abs(closed - generic) / max(1.0, abs(generic))
        worst = max(worst, rel)
    return OracleResult("determinant-identity", worst < 1e-9, worst, 1e-9,
                        f"{trials} random (n<=8, a, b) instances")


def check_gram_factorization() -> OracleResult:
    """factor_gram residual ||W W^T - Sigma||_F over the feasible grid."""
    worst = 0.0
    for k in range(2, 11):
        for p in range(k - 1, 17):
            if p < 1:
                continue
            w = geometry.factor_gram(k, p, 0.1)
            target = geometry.gram_target(k, 0.1)
            worst = max(worst, geometry.penalty(w, target))
    return OracleResult("gram-factorization", worst < 1e-8, worst, 1e-8,
                        "all K<=10, K-1<=P<=16, s=0.1")


def check_simplex_bound(seeds: int = 100) -> OracleResult:
    """No random unit-row configuration beats max-pair-cos = 1/(1-K)."""
    worst_violation = -np.inf
    for k in range(2, 11):
        bound = 1.0 / (1.0 - k)
        for seed in range(seeds):
            rng = np.random.default_rng((k, seed))
            w = rng.normal(size=(k, k + 3))
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            worst_violation = max(worst_violation, bound - geometry.max_pair_cos(w))
    return OracleResult("simplex-bound", worst_violation < 1e-12, max(worst_violation, 0.0),
                        1e-12, f"{seeds} random unit-row W per K in 2..10")


def check_maxmin_search(quick: bool = False) -> OracleResult:
    """Max-min-angle search converges to cos = 1/(1-K)."""
    cases = [(2, 2), (3, 2), (4, 3)] if quick else [(2, 2), (3, 2), (4, 3), (5, 4), (10, 9)]
    restarts = 4 if quick else 20
    worst = 0.0
    for k, p in cases:
        _, cos_star = geometry.max_min_angle_search(k, p, seed=0, restarts=restarts)
        worst = max(worst, abs(cos_star - 1.0 / (1.0 - k)))
    return OracleResult("maxmin-search", worst < 1e-3, worst, 1e-3,
                        f"(K,P) in {cases}, {restarts} restarts")


def check_infeasible_rejection() -> OracleResult:
    """K > P+1 must be rejected by factorization and search alike."""
    ok = True
    for fn in (lambda: geometry.factor_gram(5, 3, 1.0),
               lambda: geometry.max_min_angle_search(5, 3)):
        try:
            fn()
            ok = False
        except ValueError:
            pass
    return OracleResult("infeasible-rejection", ok, 0.0, 0.0, "K > P+1 raises")


def check_gradient_integrity(tol: float = 1e-5) -> OracleResult:
    """total_loss gradients vs central differences: every parameter and the
    input, both final activations, both penalty norms."""
    worst = 0.0
    rng = np.random.default_rng(42)
    for activation in ("tanh", "relu"):
        for norm in ("frobenius", "squared-frobenius"):
            model = build_mlp(4, (6,), 5, 3, activation=activation, s=0.5, seed=1)
            cfg = TrainConfig(alpha=2.0, s=0.5, penalty_norm=norm)
            # keep pre-activations away from relu's kink
            x = rng.uniform(0.1, 0.9, size=(3, 4))
            y = rng.integers(0, 3, size=3)
            for p in model.parameters().values():
                worst = max(worst, _param_grad_err(model, p, x, y, cfg))
            xt = Tensor(x, requires_grad=True)
            worst = max(worst, grad_check(lambda t: total_loss(model, t, y, cfg), xt))
    return OracleResult("gradient-integrity", worst < tol, worst, tol,
                        "MLP, activations {tanh, relu}, both penalty norms")


def _param_grad_err(model, p, x, y, cfg) -> float:
    def f(t):
        return total_loss(model, Tensor(x), y, cfg)

    return grad_check(f, p)


def run_all(quick: bool = False) -> list[OracleResult]:
    return [
        check_determinant_identity(),
        check_gram_factorization(),
        check_simplex_bound(20 if quick else 100),
        check_maxmin_search(quick=quick),
        check_infeasible_rejection(),
        check_gradient_integrity(),
    ]
