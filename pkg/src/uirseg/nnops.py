"""Neural net layers as pure array functions with hand-written backward passes.

All activations are (channels, height, width); conv kernels are
(out_ch, in_ch, kh, kw); transposed-conv kernels are (in_ch, out_ch, kh, kw).
Functions are dtype-generic: float64 in the gradient checks, float32 in
training.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]                       # (C, Ho, Wo, kh, kw)
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, x_shape, kh, kw, stride, pad, ho, wo):
    c, h, w = x_shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    g = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += g[:, i, j]
    return xp[:, pad:pad + h, pad:pad + w]


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation: out[o] = sum_c x[c] * w[o, c] + b[o]."""
    o, ci, kh, kw = w.shape
    if x.shape[0] != ci:
        raise ValueError(f"channel mismatch: input {x.shape[0]}, kernel {ci}")
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    out = w.reshape(o, -1) @ cols + b[:, None]
    return out.reshape(o, ho, wo)


def conv2d_backward(x, w, dout, stride=1, pad=0):
    """Gradients of conv2d_forward w.r.t. (input, kernel, bias)."""
    o, ci, kh, kw = w.shape
    _, ho, wo = dout.shape
    cols, _, _ = _im2col(x, kh, kw, stride, pad)
    dflat = dout.reshape(o, -1)
    dw = (dflat @ cols.T).reshape(w.shape)
    db = dflat.sum(axis=1)
    dcols = w.reshape(o, -1).T @ dflat
    dx = _col2im(dcols, x.shape, kh, kw, stride, pad, ho, wo)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, dout):
    return dout * (x > 0)


def maxpool2x2_forward(x):
    """2x2 max pooling, stride 2; ties go to the first element in row-major order."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    flat = win.reshape(c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2x2_backward(x_shape, idx, dout):
    c, h, w = x_shape
    flat = np.zeros((c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(flat, idx[..., None], dout[..., None], axis=-1)
    win = flat.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4)
    return win.reshape(c, h, w)


def conv_transpose2d_forward(x, w, b, stride, pad):
    """Transposed convolution (adjoint of conv2d with the same geometry)."""
    ci, o, kh, kw = w.shape
    if x.shape[0] != ci:
        raise ValueError(f"channel mismatch: input {x.shape[0]}, kernel {ci}")
    _, h, ww = x.shape
    hf = (h - 1) * stride + kh
    wf = (ww - 1) * stride + kw
    full = np.zeros((o, hf, wf), dtype=np.result_type(x, w))
    t = np.einsum("chw,coij->ohwij", x, w)
    for i in range(kh):
        for j in range(kw):
            full[:, i:i + stride * h:stride, j:j + stride * ww:stride] += t[:, :, :, i, j]
    out = full[:, pad:hf - pad, pad:wf - pad]
    return out + b[:, None, None]


def conv_transpose2d_backward(x, w, dout, stride, pad):
    ci, o, kh, kw = w.shape
    _, h, ww = x.shape
    hf = (h - 1) * stride + kh
    wf = (ww - 1) * stride + kw
    dfull = np.zeros((o, hf, wf), dtype=dout.dtype)
    dfull[:, pad:hf - pad, pad:wf - pad] = dout
    dx = np.zeros_like(x, dtype=dout.dtype)
    dw = np.zeros_like(w, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = dfull[:, i:i + stride * h:stride, j:j + stride * ww:stride]
            dx += np.einsum("ohw,co->chw", patch, w[:, :, i, j])
            dw[:, :, i, j] = np.einsum("chw,ohw->co", x, patch)
    db = dout.sum(axis=(1, 2))
    return dx, dw, db


def bilinear_kernel(factor: int) -> np.ndarray:
    """Exact bilinear interpolation weights for a 1-channel transposed conv.

    Kernel size is 2*factor - factor % 2, the standard choice that makes the
    transposed conv with stride `factor` reproduce bilinear upsampling.
    """
    size = 2 * factor - factor % 2
    if size % 2 == 1:
        center = factor - 1
    else:
        center = factor - 0.5
    og = np.arange(size, dtype=np.float64)
    filt = (1 - np.abs(og - center) / factor)
    return np.outer(filt, filt)


def upsample_pad(factor: int) -> int:
    """Padding that maps an HxW input to exactly (H*factor)x(W*factor)."""
    size = 2 * factor - factor % 2
    return (size - factor) // 2


def bilinear_upsample_params(factor: int, dtype=np.float64):
    """Learnable transposed-conv parameters initialized to exact bilinear weights."""
    k = bilinear_kernel(factor).astype(dtype)
    return k[None, None, :, :].copy(), np.zeros(1, dtype=dtype)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.result_type(z, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the output in the open interval even when exp saturates
    return np.clip(out, EPS, 1.0 - EPS)


EPS = 1e-7


def bce_loss(prob, label):
    """Mean per-pixel binary cross-entropy; returns (loss, dloss/dprob)."""
    if prob.shape != label.shape:
        raise ValueError(f"shape mismatch: {prob.shape} vs {label.shape}")
    y = label.astype(prob.dtype)
    p = np.clip(prob, EPS, 1.0 - EPS)
    n = p.size
    loss = float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
    grad = (p - y) / (p * (1 - p) * n)
    return loss, grad
