"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tensor


def grad_check(f, x: Tensor, h: float = 1e-6) -> float:
    """Max relative error between autodiff and central differences.

    ``f`` maps a Tensor to a scalar Tensor; the error per coordinate is
    |analytic - numeric| / max(1, |analytic|). The caller asserts on the
    returned magnitude.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x.zero_grad()
    loss = f(x)
    loss.backward()
    analytic = np.array(x.grad, copy=True)

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x).data)
        flat[i] = orig - h
        lo = float(f(x).data)
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
