from .tensor import (
    Tensor,
    no_grad,
    is_grad_enabled,
    set_default_dtype,
    default_dtype,
    conv2d,
    max_pool2d,
    logsumexp,
    prelu,
    ShapeError,
)
from .gradcheck import grad_check
from .kernels import BACKEND

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "set_default_dtype",
    "default_dtype",
    "conv2d",
    "max_pool2d",
    "logsumexp",
    "prelu",
    "ShapeError",
    "grad_check",
    "BACKEND",
]
