"""Hot numeric kernels: 2D convolution, adaptive average pooling, bilinear resize.

Each kernel has a numba loop version (suffix _nb) and a vectorized numpy
version (suffix _np). The public names dispatch on the backend selected
at import (AMCR_BACKEND env var). Both paths produce the same values up
to floating-point summation order; tests pin them together at 1e-12.

All arrays are float64 and C-contiguous. Channel-first layout (C, H, W).
"""

import numpy as np

from .backend import BACKEND, njit

# ---------------------------------------------------------------------------
# conv2d: x (Cin, H, W) * k (Cout, Cin, kh, kw) -> (Cout, Ho, Wo)


@njit
def conv2d_forward_nb(x, k, stride, pad):
    cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((cout, ho, wo))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0
                for ci in range(cin):
                    for u in range(kh):
                        r = i * stride - pad + u
                        if r < 0 or r >= h:
                            continue
                        for v in range(kw):
                            c = j * stride - pad + v
                            if c < 0 or c >= w:
                                continue
                            acc += x[ci, r, c] * k[co, ci, u, v]
                out[co, i, j] = acc
    return out


@njit
def conv2d_backward_input_nb(dy, k, stride, pad, h, w):
    cout, ho, wo = dy.shape
    _, cin, kh, kw = k.shape
    dx = np.zeros((cin, h, w))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                g = dy[co, i, j]
                for ci in range(cin):
                    for u in range(kh):
                        r = i * stride - pad + u
                        if r < 0 or r >= h:
                            continue
                        for v in range(kw):
                            c = j * stride - pad + v
                            if c < 0 or c >= w:
                                continue
                            dx[ci, r, c] += g * k[co, ci, u, v]
    return dx


@njit
def conv2d_backward_kernel_nb(dy, x, stride, pad, kh, kw):
    cout, ho, wo = dy.shape
    cin, h, w = x.shape
    dk = np.zeros((cout, cin, kh, kw))
    for co in range(cout):
        for i in range(ho):
            for j in range(wo):
                g = dy[co, i, j]
                for ci in range(cin):
                    for u in range(kh):
                        r = i * stride - pad + u
                        if r < 0 or r >= h:
                            continue
                        for v in range(kw):
                            c = j * stride - pad + v
                            if c < 0 or c >= w:
                                continue
                            dk[co, ci, u, v] += g * x[ci, r, c]
    return dk


def _im2col(x, kh, kw, stride, pad, ho, wo):
    cin, h, w = x.shape
    xp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    xp[:, pad:pad + h, pad:pad + w] = x
    cols = np.empty((cin * kh * kw, ho * wo))
    idx = 0
    for ci in range(cin):
        for u in range(kh):
            for v in range(kw):
                patch = xp[ci, u:u + ho * stride:stride, v:v + wo * stride:stride]
                cols[idx] = patch.reshape(-1)
                idx += 1
    return cols


def conv2d_forward_np(x, k, stride, pad):
    cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, pad, ho, wo)
    out = k.reshape(cout, -1) @ cols
    return np.ascontiguousarray(out.reshape(cout, ho, wo))


def conv2d_backward_input_np(dy, k, stride, pad, h, w):
    cout, ho, wo = dy.shape
    _, cin, kh, kw = k.shape
    # scatter k^T @ dy back through the im2col mapping
    dcols = k.reshape(cout, -1).T @ dy.reshape(cout, -1)
    dxp = np.zeros((cin, h + 2 * pad, w + 2 * pad))
    idx = 0
    for ci in range(cin):
        for u in range(kh):
            for v in range(kw):
                dxp[ci, u:u + ho * stride:stride, v:v + wo * stride:stride] += \
                    dcols[idx].reshape(ho, wo)
                idx += 1
    if pad == 0:
        return dxp
    return np.ascontiguousarray(dxp[:, pad:pad + h, pad:pad + w])


def conv2d_backward_kernel_np(dy, x, stride, pad, kh, kw):
    cout, ho, wo = dy.shape
    cin = x.shape[0]
    cols = _im2col(x, kh, kw, stride, pad, ho, wo)
    dk = dy.reshape(cout, -1) @ cols.T
    return np.ascontiguousarray(dk.reshape(cout, cin, kh, kw))


# ---------------------------------------------------------------------------
# adaptive average pooling: (C, H, W) -> (C, Th, Tw)
# window for output cell (i, j): rows [floor(i*H/Th), ceil((i+1)*H/Th))


@njit
def adaptive_avg_pool_forward_nb(x, th, tw):
    c, h, w = x.shape
    out = np.empty((c, th, tw))
    for i in range(th):
        r0 = (i * h) // th
        r1 = -((-(i + 1) * h) // th)
        for j in range(tw):
            c0 = (j * w) // tw
            c1 = -((-(j + 1) * w) // tw)
            area = (r1 - r0) * (c1 - c0)
            for ch in range(c):
                acc = 0.0
                for r in range(r0, r1):
                    for cc in range(c0, c1):
                        acc += x[ch, r, cc]
                out[ch, i, j] = acc / area
    return out


@njit
def adaptive_avg_pool_backward_nb(dy, h, w):
    c, th, tw = dy.shape
    dx = np.zeros((c, h, w))
    for i in range(th):
        r0 = (i * h) // th
        r1 = -((-(i + 1) * h) // th)
        for j in range(tw):
            c0 = (j * w) // tw
            c1 = -((-(j + 1) * w) // tw)
            area = (r1 - r0) * (c1 - c0)
            for ch in range(c):
                g = dy[ch, i, j] / area
                for r in range(r0, r1):
                    for cc in range(c0, c1):
                        dx[ch, r, cc] += g
    return dx


def adaptive_avg_pool_forward_np(x, th, tw):
    c, h, w = x.shape
    out = np.empty((c, th, tw))
    for i in range(th):
        r0, r1 = (i * h) // th, -((-(i + 1) * h) // th)
        for j in range(tw):
            c0, c1 = (j * w) // tw, -((-(j + 1) * w) // tw)
            out[:, i, j] = x[:, r0:r1, c0:c1].sum(axis=(1, 2)) / ((r1 - r0) * (c1 - c0))
    return out


def adaptive_avg_pool_backward_np(dy, h, w):
    c, th, tw = dy.shape
    dx = np.zeros((c, h, w))
    for i in range(th):
        r0, r1 = (i * h) // th, -((-(i + 1) * h) // th)
        for j in range(tw):
            c0, c1 = (j * w) // tw, -((-(j + 1) * w) // tw)
            dx[:, r0:r1, c0:c1] += (dy[:, i, j] / ((r1 - r0) * (c1 - c0)))[:, None, None]
    return dx


# ---------------------------------------------------------------------------
# bilinear resize (half-pixel centers, clamped): (C, H, W) -> (C, Ho, Wo)
# Preprocessing only; never differentiated.


@njit
def bilinear_resize_nb(x, ho, wo):
    c, h, w = x.shape
    out = np.empty((c, ho, wo))
    sh = h / ho
    sw = w / wo
    for i in range(ho):
        sy = (i + 0.5) * sh - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1.0:
            sy = h - 1.0
        y0 = int(sy)
        y1 = y0 + 1 if y0 + 1 < h else y0
        fy = sy - y0
        for j in range(wo):
            sx = (j + 0.5) * sw - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1.0:
                sx = w - 1.0
            x0 = int(sx)
            x1 = x0 + 1 if x0 + 1 < w else x0
            fx = sx - x0
            for ch in range(c):
                top = x[ch, y0, x0] * (1.0 - fx) + x[ch, y0, x1] * fx
                bot = x[ch, y1, x0] * (1.0 - fx) + x[ch, y1, x1] * fx
                out[ch, i, j] = top * (1.0 - fy) + bot * fy
    return out


def bilinear_resize_np(x, ho, wo):
    c, h, w = x.shape
    sy = np.clip((np.arange(ho) + 0.5) * (h / ho) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(wo) + 0.5) * (w / wo) - 0.5, 0.0, w - 1.0)
    y0 = sy.astype(np.int64)
    x0 = sx.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[None, :, None]
    fx = (sx - x0)[None, None, :]
    top = x[:, y0][:, :, x0] * (1.0 - fx) + x[:, y0][:, :, x1] * fx
    bot = x[:, y1][:, :, x0] * (1.0 - fx) + x[:, y1][:, :, x1] * fx
    return top * (1.0 - fy) + bot * fy


# ---------------------------------------------------------------------------
# dispatch

if BACKEND == "numba":
    conv2d_forward = conv2d_forward_nb
    conv2d_backward_input = conv2d_backward_input_nb
    conv2d_backward_kernel = conv2d_backward_kernel_nb
    adaptive_avg_pool_forward = adaptive_avg_pool_forward_nb
    adaptive_avg_pool_backward = adaptive_avg_pool_backward_nb
    bilinear_resize = bilinear_resize_nb
else:
    conv2d_forward = conv2d_forward_np
    conv2d_backward_input = conv2d_backward_input_np
    conv2d_backward_kernel = conv2d_backward_kernel_np
    adaptive_avg_pool_forward = adaptive_avg_pool_forward_np
    adaptive_avg_pool_backward = adaptive_avg_pool_backward_np
    bilinear_resize = bilinear_resize_np
