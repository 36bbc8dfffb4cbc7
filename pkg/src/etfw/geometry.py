"""Classifier-weight geometry: the equiangular Gram target, its penalty, and
numerical oracles for the max-min-angle optimum.

Everything here is plain numpy over a weight matrix W whose rows are the
per-class weight vectors. The key object is the K x K Gram target with s^2 on
the diagonal and s^2/(1-K) off it: the Gram matrix of a regular simplex of K
unit-norm-s vectors, which maximizes the minimum pairwise angle whenever
K <= P+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ZERO_ROW_TOL = 1e-12


@dataclass(frozen=True)
class GramTarget:
    k: int
    s: float
    sigma: np.ndarray

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.sigma))


@dataclass(frozen=True)
class AngleStats:
    min_pair_angle: float
    max_pair_cos: float
    penalty_value: float
    row_norms: np.ndarray


def gram_target(k: int, s: float) -> GramTarget:
    """K x K matrix with s^2 diagonal and s^2/(1-K) off-diagonal."""
    if k < 2:
        raise ValueError(f"class count must be >= 2, got {k}")
    if s <= 0:
        raise ValueError(f"row norm s must be positive, got {s}")
    off = s * s / (1.0 - k)
    sigma = np.full((k, k), off)
    np.fill_diagonal(sigma, s * s)
    return GramTarget(k=k, s=float(s), sigma=sigma)


def structured_det(n: int, a: float, b: float) -> float:
    """Closed-form determinant of the n x n matrix with a on the diagonal
    and b everywhere else: (a + b(n-1)) * (a-b)^(n-1)."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    return float((a + b * (n - 1)) * (a - b) ** (n - 1))


def factor_gram(k: int, p: int, s: float, rotate_seed: int | None = None) -> np.ndarray:
    """A K x P matrix W with W W^T equal to the Gram target.

    Symmetric eigendecomposition of the target keeps the K-1 nonzero
    eigenpairs; their scaled eigenvectors are zero-padded to width P. With
    ``rotate_seed`` the columns are mixed by a seeded random orthogonal
    matrix, useful as a non-canonical initialization.
    """
    target = gram_target(k, s)
    if k > p + 1:
        raise ValueError(f"infeasible: need K <= P+1, got K={k}, P={p}")
    evals, evecs = np.linalg.eigh(target.sigma)
    # ascending order: the single (near-)zero eigenvalue comes first
    nonzero = np.clip(evals[1:], 0.0, None)
    v = evecs[:, 1:] * np.sqrt(nonzero)
    w = np.zeros((k, p))
    w[:, : k - 1] = v
    if rotate_seed is not None:
        rng = np.random.default_rng(rotate_seed)
        q, _ = np.linalg.qr(rng.normal(size=(p, p)))
        w = w @ q
    return w


def penalty(w: np.ndarray, target: GramTarget, squared: bool = False) -> float:
    """Frobenius norm (optionally squared) of W W^T minus the Gram target."""
    if w.ndim != 2 or w.shape[0] != target.k:
        raise ValueError(f"weight shape {w.shape} does not match target K={target.k}")
    diff = w @ w.T - target.sigma
    val = float(np.sum(diff * diff))
    return val if squared else float(np.sqrt(val))


def max_pair_cos(w: np.ndarray) -> float:
    """Largest cosine over distinct normalized row pairs."""
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms < _ZERO_ROW_TOL):
        raise ValueError("zero row in weight matrix")
    unit = w / norms[:, None]
    c = unit @ unit.T
    np.fill_diagonal(c, -np.inf)
    return float(np.clip(c.max(), -1.0, 1.0))


def angle_stats(w: np.ndarray, target: GramTarget | None = None) -> AngleStats:
    """Pairwise-angle summary of the classifier rows."""
    if w.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {w.shape[0]}")
    cmax = max_pair_cos(w)
    if target is None:
        target = gram_target(w.shape[0], float(np.linalg.norm(w, axis=1).mean()))
    return AngleStats(
        min_pair_angle=float(np.arccos(cmax)),
        max_pair_cos=cmax,
        penalty_value=penalty(w, target),
        row_norms=np.linalg.norm(w, axis=1),
    )


def _lse_max_cos(flat, k, p, t):
    """Smoothed max pairwise cosine of normalized rows, with gradient.

    Rows are parametrized unnormalized and normalized inside the objective,
    which keeps the unit-norm constraint exact while staying smooth.
    """
    w = flat.reshape(k, p)
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    u = w / norms
    iu = np.triu_indices(k, 1)
    pair = (u @ u.T)[iu]
    m = pair.max()
    e = np.exp(t * (pair - m))
    total = e.sum()
    val = m + np.log(total) / t
    soft = e / total
    gu = np.zeros_like(u)
    np.add.at(gu, iu[0], soft[:, None] * u[iu[1]])
    np.add.at(gu, iu[1], soft[:, None] * u[iu[0]])
    gw = (gu - np.sum(gu * u, axis=1, keepdims=True) * u) / norms
    return val, gw.ravel()


def max_min_angle_search(
    k: int,
    p: int,
    seed: int = 0,
    iters: int = 500,
    restarts: int = 8,
):
    """Numerically maximize the minimum pairwise angle of K unit rows in R^P.

    Minimizes the max pairwise cosine smoothed by log-sum-exp, annealing the
    temperature 10 -> 1e5 with an L-BFGS solve per stage, best over seeded
    restarts. Returns (best W, achieved max-pair-cos); at the optimum the
    cosine equals 1/(1-K) for any feasible K <= P+1.
    """
    from scipy.optimize import minimize

    if k < 2 or k > p + 1:
        raise ValueError(f"infeasible: need 2 <= K <= P+1, got K={k}, P={p}")
    temps = (10.0, 100.0, 1000.0, 1e4, 1e5)
    best_w, best_cos = None, np.inf
    for r in range(restarts):
        rng = np.random.default_rng((seed, r))
        flat = rng.normal(size=k * p)
        for t in temps:
            res = minimize(
                _lse_max_cos,
                flat,
                args=(k, p, t),
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": iters},
            )
            flat = res.x
        w = flat.reshape(k, p)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        c = max_pair_cos(w)
        if c < best_cos:
            best_cos, best_w = c, w
    return best_w, best_cos
