"""Batched float32 neural-net layers with hand-written backprop: same-pad
strided conv, nearest upsample, relu, linear, FiLM modulation, sinusoidal
time embedding. Layout is NCHW. Backward passes return gradients matching
the forward's float32 dtype; correctness is pinned by finite-difference
tests rather than trusted by construction.
"""

from __future__ import annotations

import numpy as np

F32 = np.float32


def _same_pad(size: int, k: int, stride: int):
    out = -(-size // stride)
    pad = max((out - 1) * stride + k - size, 0)
    return out, pad // 2, pad - pad // 2


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """x [B,Cin,H,W] * w [Cout,Cin,k,k] + b, zero same-padding."""
    bsz, cin, h, wid = x.shape
    cout, cin2, k, _ = w.shape
    assert cin == cin2, f"channel mismatch {cin} vs {cin2}"
    oh, top, bot = _same_pad(h, k, stride)
    ow, left, right = _same_pad(wid, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (top, bot), (left, right)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [B,Cin,OH,OW,k,k]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(bsz, oh, ow, cin * k * k)
    wmat = w.reshape(cout, cin * k * k)
    y = cols @ wmat.T + b
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    cache = (cols, w, x.shape, stride, (top, left), (oh, ow))
    return y, cache


def conv_backward(dy: np.ndarray, cache):
    cols, w, xshape, stride, (top, left), (oh, ow) = cache
    bsz, cin, h, wid = xshape
    cout, _, k, _ = w.shape
    dym = np.ascontiguousarray(dy.transpose(0, 2, 3, 1))  # [B,OH,OW,Cout]
    db = dym.sum(axis=(0, 1, 2))
    dw = np.tensordot(dym, cols, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
    dcols = dym @ w.reshape(cout, -1)  # [B,OH,OW,Cin*k*k]
    dcols = dcols.reshape(bsz, oh, ow, cin, k, k).transpose(0, 3, 1, 2, 4, 5)
    hp = h + top + (_same_pad(h, k, stride)[2])
    wp = wid + left + (_same_pad(wid, k, stride)[2])
    dxp = np.zeros((bsz, cin, hp, wp), dtype=dy.dtype)
    for di in range(k):
        for dj in range(k):
            dxp[:, :, di:di + stride * oh:stride, dj:dj + stride * ow:stride] += dcols[:, :, :, :, di, dj]
    dx = dxp[:, :, top:top + h, left:left + wid]
    return np.ascontiguousarray(dx), dw, db


def upsample2_forward(x: np.ndarray):
    """Nearest-neighbor 2x upsample."""
    y = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    return y, x.shape


def upsample2_backward(dy: np.ndarray, xshape):
    b, c, h, w = xshape
    return dy.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5))


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, x > 0


def relu_backward(dy: np.ndarray, mask):
    return dy * mask


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x [B,Din] @ w [Din,Dout] + b."""
    return x @ w + b, (x, w)


def linear_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def film_forward(h: np.ndarray, cvec: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Feature-wise affine modulation h*(1+scale)+shift from a conditioning
    vector; w maps cvec to [scale|shift] per channel. Zero w,b = identity."""
    bsz, c = h.shape[0], h.shape[1]
    ss, lin_cache = linear_forward(cvec, w, b)  # [B, 2C]
    scale = ss[:, :c][:, :, None, None]
    shift = ss[:, c:][:, :, None, None]
    y = h * (1.0 + scale) + shift
    return y, (h, scale, lin_cache)


def film_backward(dy: np.ndarray, cache):
    h, scale, lin_cache = cache
    c = h.shape[1]
    dh = dy * (1.0 + scale)
    dscale = (dy * h).sum(axis=(2, 3))
    dshift = dy.sum(axis=(2, 3))
    dss = np.concatenate([dscale, dshift], axis=1).astype(dy.dtype)
    dcvec, dw, db = linear_backward(dss, lin_cache)
    return dh, dcvec, dw, db


def time_embedding(t_idx: np.ndarray, T: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of t/T over geometric frequencies, float32."""
    if dim % 2 != 0:
        raise ValueError("time embedding dim must be even")
    pos = np.asarray(t_idx, dtype=np.float64) / T
    half = dim // 2
    freqs = np.geomspace(1.0, 1000.0, half)
    ang = 2.0 * np.pi * pos[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(F32)


def coord_channels(bsz: int, h: int, w: int) -> np.ndarray:
    """Two fixed channels holding normalized x and y coordinates in [-1,1].

    Convolutions are translation-equivariant, so without these the model
    cannot act differently on "left" vs "right" prompts.
    """
    ys = np.linspace(-1.0, 1.0, h, dtype=F32)
    xs = np.linspace(-1.0, 1.0, w, dtype=F32)
    cx = np.broadcast_to(xs[None, :], (h, w))
    cy = np.broadcast_to(ys[:, None], (h, w))
    grid = np.stack([cx, cy])[None]
    return np.broadcast_to(grid, (bsz, 2, h, w)).astype(F32)
