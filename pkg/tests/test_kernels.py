import numpy as np
import pytest

from etfw.numcore import _slow

try:
    from etfw.numcore import _fast
except ImportError:  # pragma: no cover - extension not built
    _fast = None

needs_fast = pytest.mark.skipif(_fast is None, reason="compiled kernels not built")

CASES = [
    # (N, C, H, W, KH, KW, stride, padding)
    (1, 1, 4, 4, 2, 2, 1, 0),
    (2, 3, 8, 8, 3, 3, 1, 1),
    (3, 2, 7, 5, 3, 2, 2, 1),
    (2, 4, 9, 9, 5, 5, 2, 2),
]


def _inputs(n, c, h, w, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, c, h, w))


@needs_fast
@pytest.mark.parametrize("n,c,h,w,kh,kw,stride,pad", CASES)
def test_im2col_agrees(n, c, h, w, kh, kw, stride, pad):
    x = _inputs(n, c, h, w, 0)
    a = _slow.im2col(x, kh, kw, stride, pad)
    b = _fast.im2col(x, kh, kw, stride, pad)
    assert np.array_equal(a, b)


@needs_fast
@pytest.mark.parametrize("n,c,h,w,kh,kw,stride,pad", CASES)
def test_col2im_agrees(n, c, h, w, kh, kw, stride, pad):
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    rng = np.random.default_rng(1)
    cols = rng.normal(size=(n * oh * ow, c * kh * kw))
    a = _slow.col2im(cols, (n, c, h, w), kh, kw, stride, pad)
    b = _fast.col2im(cols, (n, c, h, w), kh, kw, stride, pad)
    # accumulation order differs between backends, so allow float rounding
    assert np.allclose(a, b, rtol=0.0, atol=1e-12)


@needs_fast
@pytest.mark.parametrize("k,stride", [(2, 2), (3, 3), (2, 1), (3, 2)])
def test_maxpool_agrees(k, stride):
    x = _inputs(3, 2, 9, 9, 2)
    out_a, arg_a = _slow.maxpool_forward(x, k, stride)
    out_b, arg_b = _fast.maxpool_forward(x, k, stride)
    assert np.array_equal(out_a, out_b)
    assert np.array_equal(arg_a, arg_b)
    g = np.random.default_rng(3).normal(size=out_a.shape)
    ga = _slow.maxpool_backward(g, arg_a, x.shape, k, stride)
    gb = _fast.maxpool_backward(g, arg_b, x.shape, k, stride)
    assert np.array_equal(ga, gb)


@needs_fast
def test_maxpool_tie_breaking_matches(ctx=None):
    # repeated maxima: both backends must route gradient to the first max
    x = np.zeros((1, 1, 4, 4))
    out_a, arg_a = _slow.maxpool_forward(x, 2, 2)
    out_b, arg_b = _fast.maxpool_forward(x, 2, 2)
    assert np.array_equal(arg_a, arg_b)


def test_backend_env_override(monkeypatch):
    import importlib
    import subprocess
    import sys

    code = (
        "import os; os.environ['ETFW_PURE_PYTHON']='1';"
        "from etfw.numcore import kernels; print(kernels.BACKEND)"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numpy"


def test_selected_backend_reported():
    from etfw.numcore import kernels

    assert kernels.BACKEND in ("cython", "numpy")
    if _fast is not None:
        assert kernels.BACKEND == "cython"
