"""Differentiable neural ops built on the autodiff engine.

conv2d runs as im2col + one BLAS matmul; the windowed multi-head
attention composes engine primitives so its gradient comes for free.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import (
    ConfigError,
    ShapeError,
    Tensor,
    _from_op,
    add,
    crop2d,
    matmul,
    mul,
    narrow,
    reflect_pad2d,
    reshape,
    roll2d,
    softmax,
    square,
    sqrt,
    tmean,
    transpose,
)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over [B, C, H, W] with an [O, C, k, k] kernel."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be [B, C, H, W], got rank {x.ndim}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be [O, C, k, k], got rank {weight.ndim}")
    b_, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError(f"conv2d kernel must be square, got {kh}x{kw}")
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c} channels, weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"conv2d bias must be [{o}], got {bias.shape}")
    if x.dtype != weight.dtype or (bias is not None and bias.dtype != x.dtype):
        raise ShapeError("conv2d operands must share a dtype")
    k, s, p = kh, stride, padding
    if h + 2 * p < k or w + 2 * p < k:
        raise ShapeError(f"conv2d spatial extent {h}x{w} too small for kernel {k} with padding {p}")
    h2 = (h + 2 * p - k) // s + 1
    w2 = (w + 2 * p - k) // s + 1

    if p > 0:
        xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    else:
        xp = x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b_ * h2 * w2, c * k * k)
    wmat = weight.data.reshape(o, c * k * k)
    out = (cols @ wmat.T).reshape(b_, h2, w2, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def grad_fn(g):
        g_flat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(b_ * h2 * w2, o)
        gw = (g_flat.T @ cols).reshape(o, c, k, k)
        gcols = (g_flat @ wmat).reshape(b_, h2, w2, c, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * h2:s, j:j + s * w2:s] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:p + h, p:p + w] if p > 0 else gxp
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        if bias is not None:
            return gx, gw, gb
        return gx, gw

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _from_op(np.ascontiguousarray(out), parents, grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias over the trailing feature axis; weight is [in, out]."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"linear bias must be [{weight.shape[1]}], got {bias.shape}")
        out = add(out, bias)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the trailing axis to zero mean / unit variance, then affine."""
    mu = tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = tmean(square(centered), axis=-1, keepdims=True)
    inv = centered / sqrt(var + eps)
    return add(mul(inv, gamma), beta)


def window_partition(x: Tensor, window: int) -> Tensor:
    """[B, C, H, W] -> [B*nh*nw, window*window, C] token windows."""
    b, c, h, w = x.shape
    nh, nw = h // window, w // window
    t = reshape(x, (b, c, nh, window, nw, window))
    t = transpose(t, (0, 2, 4, 3, 5, 1))
    return reshape(t, (b * nh * nw, window * window, c))


def window_merge(tokens: Tensor, window: int, b: int, c: int, h: int, w: int) -> Tensor:
    """Inverse of window_partition."""
    nh, nw = h // window, w // window
    t = reshape(tokens, (b, nh, nw, window, window, c))
    t = transpose(t, (0, 5, 1, 3, 2, 4))
    return reshape(t, (b, c, h, w))


def shifted_window_mask(h: int, w: int, window: int, dtype) -> np.ndarray:
    """Additive attention mask [n_windows, T, T] blocking cross-region pairs.

    Regions follow the cyclic-shift construction: after rolling by
    -window//2, tokens wrapped across the former image boundary must not
    attend to unwrapped tokens.
    """
    shift = window // 2
    region = np.zeros((h, w), dtype=np.int64)
    cnt = 0
    h_spans = ((0, h - window), (h - window, h - shift), (h - shift, h))
    w_spans = ((0, w - window), (w - window, w - shift), (w - shift, w))
    for hs, he in h_spans:
        for ws, we in w_spans:
            region[hs:he, ws:we] = cnt
            cnt += 1
    nh, nw = h // window, w // window
    ids = region.reshape(nh, window, nw, window).transpose(0, 2, 1, 3).reshape(nh * nw, window * window)
    neq = ids[:, :, None] != ids[:, None, :]
    return np.where(neq, np.asarray(-1e9, dtype=dtype), np.asarray(0.0, dtype=dtype))


def window_attention(x: Tensor, qkv_weight: Tensor, qkv_bias: Tensor,
                     proj_weight: Tensor, proj_bias: Tensor, *,
                     window: int, heads: int, shifted: bool,
                     return_attn: bool = False):
    """Multi-head self-attention inside non-overlapping spatial windows.

    When ``shifted``, the grid is cyclically shifted by window//2 before
    partitioning and restored after, with wrapped pairs masked out.
    Non-divisible extents are reflect-padded and cropped back.
    """
    if x.ndim != 4:
        raise ShapeError(f"window_attention input must be [B, C, H, W], got rank {x.ndim}")
    b, c, h, w = x.shape
    if c % heads != 0:
        raise ConfigError(f"channels {c} not divisible by heads {heads}")
    if qkv_weight.shape != (c, 3 * c):
        raise ShapeError(f"qkv weight must be [{c}, {3 * c}], got {qkv_weight.shape}")
    if proj_weight.shape != (c, c):
        raise ShapeError(f"proj weight must be [{c}, {c}], got {proj_weight.shape}")
    dh = c // heads
    scale = 1.0 / math.sqrt(dh)

    hp = -(-h // window) * window
    wp = -(-w // window) * window
    t = reflect_pad2d(x, hp - h, wp - w) if (hp != h or wp != w) else x

    shift = window // 2
    if shifted and shift > 0:
        t = roll2d(t, -shift, -shift)

    tokens = window_partition(t, window)  # [NW, T, C]
    n_win_total, tok, _ = tokens.shape
    qkv = linear(tokens, qkv_weight, qkv_bias)  # [NW, T, 3C]
    q, k, v = (narrow(qkv, 2, i * c, c) for i in range(3))

    def to_heads(z):
        z = reshape(z, (n_win_total, tok, heads, dh))
        return transpose(z, (0, 2, 1, 3))  # [NW, heads, T, dh]

    q, k, v = to_heads(q), to_heads(k), to_heads(v)
    logits = mul(matmul(q, transpose(k, (0, 1, 3, 2))), scale)

    if shifted and shift > 0:
        mask = shifted_window_mask(hp, wp, window, x.dtype)  # [nwin, T, T]
        nwin = mask.shape[0]
        logits = reshape(logits, (b, nwin, heads, tok, tok))
        logits = add(logits, Tensor(mask[None, :, None, :, :]))
        logits = reshape(logits, (n_win_total, heads, tok, tok))

    attn = softmax(logits, axis=-1)
    out = matmul(attn, v)  # [NW, heads, T, dh]
    out = reshape(transpose(out, (0, 2, 1, 3)), (n_win_total, tok, c))
    out = linear(out, proj_weight, proj_bias)
    out = window_merge(out, window, b, c, hp, wp)

    if shifted and shift > 0:
        out = roll2d(out, shift, shift)
    if hp != h or wp != w:
        out = crop2d(out, h, w)
    if return_attn:
        return out, attn.data.copy()
    return out


def he_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int, dtype) -> Tensor:
    """Fan-in scaled uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=tuple(shape)).astype(dtype), requires_grad=True)


def zeros_param(shape: Sequence[int], dtype) -> Tensor:
    return Tensor(np.zeros(tuple(shape), dtype=dtype), requires_grad=True)


def ones_param(shape: Sequence[int], dtype) -> Tensor:
    return Tensor(np.ones(tuple(shape), dtype=dtype), requires_grad=True)
