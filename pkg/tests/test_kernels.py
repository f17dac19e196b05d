"""Kernel correctness: both backends agree, adjoints match forwards, and
hand-checkable cases come out exact."""

import numpy as np
import pytest

from amcr.backend import BACKEND, NUMBA_AVAILABLE
from amcr import kernels as K


def rng_for(seed):
    return np.random.default_rng(seed)


def conv_sizes(h, w, kh, kw, stride, pad):
    return (h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1


# ---------------------------------------------------------------------------
# brute-force conv oracle, written against the definition rather than any
# kernel code path

def conv_reference(x, k, stride, pad):
    cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    ho, wo = conv_sizes(h, w, kh, kw, stride, pad)
    out = np.zeros((cout, ho, wo))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, i * stride:i * stride + kh, j * stride:j * stride + kw]
                out[co, i, j] = np.sum(patch * k[co])
    return out


CONV_CASES = [
    # (cin, h, w, cout, kh, kw, stride, pad)
    (1, 5, 5, 1, 3, 3, 1, 0),
    (3, 8, 6, 4, 3, 3, 1, 1),
    (2, 9, 9, 3, 5, 5, 2, 2),
    (4, 7, 11, 2, 1, 1, 1, 0),
    (2, 6, 6, 2, 3, 3, 2, 0),
    (1, 4, 4, 5, 3, 3, 1, 2),  # padding larger than usual
]


@pytest.mark.parametrize("cin,h,w,cout,kh,kw,stride,pad", CONV_CASES)
def test_conv_forward_matches_reference(cin, h, w, cout, kh, kw, stride, pad):
    rng = rng_for(hash((cin, h, w, cout, kh, kw, stride, pad)) % 2**32)
    x = rng.standard_normal((cin, h, w))
    k = rng.standard_normal((cout, cin, kh, kw))
    want = conv_reference(x, k, stride, pad)
    np.testing.assert_allclose(K.conv2d_forward_np(x, k, stride, pad), want,
                               rtol=0, atol=1e-12)
    if NUMBA_AVAILABLE:
        np.testing.assert_allclose(K.conv2d_forward_nb(x, k, stride, pad), want,
                                   rtol=0, atol=1e-12)


@pytest.mark.parametrize("cin,h,w,cout,kh,kw,stride,pad", CONV_CASES)
def test_conv_backward_adjoint_identity(cin, h, w, cout, kh, kw, stride, pad):
    # conv is linear in x and in k, so its backward passes are exact
    # adjoints: <conv(x,k), dy> == <x, d_input(dy,k)> == <k, d_kernel(dy,x)>
    rng = rng_for(hash(("adj", cin, h, w, cout, kh, kw, stride, pad)) % 2**32)
    x = rng.standard_normal((cin, h, w))
    k = rng.standard_normal((cout, cin, kh, kw))
    y = K.conv2d_forward_np(x, k, stride, pad)
    dy = rng.standard_normal(y.shape)
    lhs = np.sum(y * dy)
    dx = K.conv2d_backward_input_np(dy, k, stride, pad, h, w)
    dk = K.conv2d_backward_kernel_np(dy, x, stride, pad, kh, kw)
    assert abs(lhs - np.sum(x * dx)) < 1e-9 * max(1.0, abs(lhs))
    assert abs(lhs - np.sum(k * dk)) < 1e-9 * max(1.0, abs(lhs))
    if NUMBA_AVAILABLE:
        np.testing.assert_allclose(
            K.conv2d_backward_input_nb(dy, k, stride, pad, h, w), dx,
            rtol=0, atol=1e-12)
        np.testing.assert_allclose(
            K.conv2d_backward_kernel_nb(dy, x, stride, pad, kh, kw), dk,
            rtol=0, atol=1e-12)


def test_conv_zero_padding_contributes_zero():
    # an all-ones kernel over an all-ones image counts only real pixels
    x = np.ones((1, 3, 3))
    k = np.ones((1, 1, 3, 3))
    out = K.conv2d_forward_np(x, k, 1, 1)
    assert out[0, 1, 1] == 9.0   # center window fully inside
    assert out[0, 0, 0] == 4.0   # corner window covers a 2x2 of real pixels
    assert out[0, 0, 1] == 6.0


# ---------------------------------------------------------------------------
# adaptive average pooling


def pool_reference(x, th, tw):
    c, h, w = x.shape
    out = np.empty((c, th, tw))
    for i in range(th):
        r0 = (i * h) // th
        r1 = int(np.ceil((i + 1) * h / th))
        for j in range(tw):
            c0 = (j * w) // tw
            c1 = int(np.ceil((j + 1) * w / tw))
            out[:, i, j] = x[:, r0:r1, c0:c1].mean(axis=(1, 2))
    return out


POOL_CASES = [(1, 4, 4, 2, 2), (3, 7, 5, 3, 3), (2, 10, 10, 3, 7),
              (1, 5, 5, 5, 5), (2, 6, 9, 1, 1), (1, 3, 3, 2, 2)]


@pytest.mark.parametrize("c,h,w,th,tw", POOL_CASES)
def test_pool_forward_matches_reference(c, h, w, th, tw):
    rng = rng_for(hash((c, h, w, th, tw)) % 2**32)
    x = rng.standard_normal((c, h, w))
    want = pool_reference(x, th, tw)
    np.testing.assert_allclose(K.adaptive_avg_pool_forward_np(x, th, tw), want,
                               rtol=0, atol=1e-12)
    if NUMBA_AVAILABLE:
        np.testing.assert_allclose(K.adaptive_avg_pool_forward_nb(x, th, tw), want,
                                   rtol=0, atol=1e-12)


def test_pool_hand_case():
    # 4x4 ramp 0..15 pooled to 2x2: each quadrant averages its four cells
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    want = np.array([[[2.5, 4.5], [10.5, 12.5]]])
    np.testing.assert_allclose(K.adaptive_avg_pool_forward_np(x, 2, 2), want)


def test_pool_identity_when_same_size():
    rng = rng_for(11)
    x = rng.standard_normal((2, 5, 5))
    np.testing.assert_allclose(K.adaptive_avg_pool_forward_np(x, 5, 5), x)


@pytest.mark.parametrize("c,h,w,th,tw", POOL_CASES)
def test_pool_backward_adjoint_identity(c, h, w, th, tw):
    rng = rng_for(hash(("padj", c, h, w, th, tw)) % 2**32)
    x = rng.standard_normal((c, h, w))
    dy = rng.standard_normal((c, th, tw))
    lhs = np.sum(K.adaptive_avg_pool_forward_np(x, th, tw) * dy)
    dx = K.adaptive_avg_pool_backward_np(dy, h, w)
    assert abs(lhs - np.sum(x * dx)) < 1e-9 * max(1.0, abs(lhs))
    if NUMBA_AVAILABLE:
        np.testing.assert_allclose(K.adaptive_avg_pool_backward_nb(dy, h, w), dx,
                                   rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# bilinear resize


def test_resize_identity_same_size():
    rng = rng_for(21)
    x = rng.standard_normal((3, 6, 7))
    np.testing.assert_allclose(K.bilinear_resize_np(x, 6, 7), x, rtol=0, atol=1e-12)


def test_resize_constant_image_stays_constant():
    x = np.full((2, 5, 9), 3.25)
    out = K.bilinear_resize_np(x, 13, 4)
    np.testing.assert_allclose(out, 3.25, rtol=0, atol=1e-12)


def test_resize_hand_case_upsample():
    # [0,1] widened to 4 samples with half-pixel centers: the outer source
    # positions clamp to the edges, the inner two interpolate at 1/4 and 3/4
    x = np.array([[[0.0, 1.0]]])
    out = K.bilinear_resize_np(x, 1, 4)
    np.testing.assert_allclose(out, [[[0.0, 0.25, 0.75, 1.0]]], rtol=0, atol=1e-12)


def test_resize_hand_case_2_to_3():
    x = np.array([[[0.0, 1.0]]])
    out = K.bilinear_resize_np(x, 1, 3)
    np.testing.assert_allclose(out, [[[0.0, 0.5, 1.0]]], rtol=0, atol=1e-12)


def test_resize_downsample_range_bounded():
    # interpolation is a convex combination, so outputs stay in the input range
    rng = rng_for(31)
    x = rng.uniform(2.0, 7.0, size=(3, 17, 23))
    out = K.bilinear_resize_np(x, 5, 6)
    assert out.min() >= 2.0 - 1e-12 and out.max() <= 7.0 + 1e-12


RESIZE_CASES = [(1, 4, 4, 8, 8), (3, 7, 5, 3, 11), (2, 16, 9, 16, 9),
                (1, 2, 2, 5, 3), (2, 13, 4, 4, 13)]


@pytest.mark.parametrize("c,h,w,ho,wo", RESIZE_CASES)
def test_resize_backends_agree(c, h, w, ho, wo):
    if not NUMBA_AVAILABLE:
        pytest.skip("numba backend not importable")
    rng = rng_for(hash(("rs", c, h, w, ho, wo)) % 2**32)
    x = rng.standard_normal((c, h, w))
    np.testing.assert_allclose(K.bilinear_resize_nb(x, ho, wo),
                               K.bilinear_resize_np(x, ho, wo),
                               rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# dispatch


def test_dispatch_matches_selected_backend():
    if BACKEND == "numba":
        assert K.conv2d_forward is K.conv2d_forward_nb
        assert K.adaptive_avg_pool_forward is K.adaptive_avg_pool_forward_nb
        assert K.bilinear_resize is K.bilinear_resize_nb
    else:
        assert K.conv2d_forward is K.conv2d_forward_np
        assert K.adaptive_avg_pool_forward is K.adaptive_avg_pool_forward_np
        assert K.bilinear_resize is K.bilinear_resize_np


def test_numpy_backend_env_flag_forces_fallback():
    import subprocess
    import sys
    code = ("import amcr.kernels as K\n"
            "assert K.conv2d_forward is K.conv2d_forward_np\n"
            "import amcr.backend as B\n"
            "assert B.BACKEND == 'numpy'\n"
            "print('ok')\n")
    proc = subprocess.run([sys.executable, "-c", code],
                          capture_output=True, text=True,
                          env={"AMCR_BACKEND": "numpy", "PATH": "/usr/bin:/bin"})
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip() == "ok"
