"""Shared test oracles: straightforward reference implementations kept
independent of the fast code paths they verify."""

from __future__ import annotations

import numpy as np
import pytest

from vfiqa.autodiff import Tensor, no_grad


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---- finite-difference gradient checking -------------------------------------


def check_gradients(fn, arrays, eps, rtol=None):
    """Compare analytic grads of scalar fn(list[Tensor]) against central
    finite differences; returns the worst norm-relative error."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(tensors)
    loss.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        for t in tensors
    ]

    def scalar(arrs):
        with no_grad():
            return float(fn([Tensor(a) for a in arrs]).data.reshape(-1)[0])

    worst = 0.0
    for idx, arr in enumerate(arrays):
        work = [a.copy() for a in arrays]
        flat = work[idx].reshape(-1)
        fd = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = scalar(work)
            flat[i] = orig - eps
            fm = scalar(work)
            flat[i] = orig
            fd[i] = (fp - fm) / (2.0 * eps)
        ga = analytic[idx].astype(np.float64).reshape(-1)
        denom = max(np.linalg.norm(ga), np.linalg.norm(fd), 1e-12)
        err = np.linalg.norm(ga - fd) / denom
        worst = max(worst, err)
        if rtol is not None:
            assert err < rtol, f"input {idx}: relative gradient error {err:.3e} >= {rtol}"
    return worst


# ---- naive convolution oracle --------------------------------------------------


def conv2d_oracle(x, w, b=None, stride=1, padding=0):
    """Direct-summation cross-correlation, nested loops, float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    bn, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h2 = (h + 2 * padding - k) // stride + 1
    w2 = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((bn, o, h2, w2))
    for bi in range(bn):
        for oi in range(o):
            for i in range(h2):
                for j in range(w2):
                    patch = xp[bi, :, i * stride:i * stride + k, j * stride:j * stride + k]
                    out[bi, oi, i, j] = np.sum(patch * w[oi])
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


# ---- dense per-window attention oracle -----------------------------------------


def window_attention_oracle(x, qkv_w, qkv_b, proj_w, proj_b, window, heads, shifted):
    """Dense per-window multi-head attention with explicit loops.

    Mirrors the cyclic-shift definition: tokens that wrapped across the
    frame boundary may only attend to tokens from the same pre-shift
    region.
    """
    x = np.asarray(x, dtype=np.float64)
    b_, c, h, w = x.shape
    s = window // 2
    assert h % window == 0 and w % window == 0
    xs = np.roll(x, (-s, -s), axis=(2, 3)) if shifted else x
    dh = c // heads
    scale = 1.0 / np.sqrt(dh)

    def region(r, n):
        if r < n - window:
            return 0
        if r < n - s:
            return 1
        return 2

    out = np.zeros_like(xs)
    for bi in range(b_):
        for wi in range(h // window):
            for wj in range(w // window):
                coords = [(wi * window + di, wj * window + dj)
                          for di in range(window) for dj in range(window)]
                tok = np.array([xs[bi, :, r, cc] for (r, cc) in coords])
                qkv = tok @ np.asarray(qkv_w, dtype=np.float64) + np.asarray(qkv_b, dtype=np.float64)
                q, k, v = qkv[:, :c], qkv[:, c:2 * c], qkv[:, 2 * c:]
                merged = np.zeros((len(coords), c))
                for hd in range(heads):
                    sl = slice(hd * dh, (hd + 1) * dh)
                    logits = q[:, sl] @ k[:, sl].T * scale
                    if shifted and s > 0:
                        for i, (ri, ci) in enumerate(coords):
                            for j, (rj, cj) in enumerate(coords):
                                if (region(ri, h), region(ci, w)) != (region(rj, h), region(cj, w)):
                                    logits[i, j] = -1e9
                    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
                    p = e / e.sum(axis=-1, keepdims=True)
                    merged[:, sl] = p @ v[:, sl]
                proj = merged @ np.asarray(proj_w, dtype=np.float64) + np.asarray(proj_b, dtype=np.float64)
                for i, (r, cc) in enumerate(coords):
                    out[bi, :, r, cc] = proj[i]
    if shifted and s > 0:
        out = np.roll(out, (s, s), axis=(2, 3))
    return out


# ---- rank statistics oracle -----------------------------------------------------


def average_ranks(values):
    """Average ranks (1-based), ties share the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson_oracle(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    return float(np.sum(xc * yc) / np.sqrt(np.sum(xc * xc) * np.sum(yc * yc)))


def spearman_oracle(x, y):
    return pearson_oracle(average_ranks(x), average_ranks(y))


def kendall_tau_b_oracle(x, y):
    """Pair counting with tie correction."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif dx * dy > 0:
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) / 2.0
    return float((concordant - discordant)
                 / np.sqrt((n0 - ties_x) * (n0 - ties_y)))


# ---- pixel-space SSIM oracle -----------------------------------------------------


def ssim_luma_oracle(x, y, taps=11, sigma=1.5, k1=0.01, k2=0.03, data_range=2.0):
    """Per-window SSIM of two luma planes with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    g1 = np.arange(taps) - (taps - 1) / 2.0
    g1 = np.exp(-(g1 ** 2) / (2 * sigma ** 2))
    g1 /= g1.sum()
    kernel = np.outer(g1, g1)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, w = x.shape
    vals = []
    for i in range(h - taps + 1):
        for j in range(w - taps + 1):
            px = x[i:i + taps, j:j + taps]
            py = y[i:i + taps, j:j + taps]
            mx = np.sum(px * kernel)
            my = np.sum(py * kernel)
            vx = np.sum(px * px * kernel) - mx * mx
            vy = np.sum(py * py * kernel) - my * my
            cov = np.sum(px * py * kernel) - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


# ---- clip helpers ----------------------------------------------------------------


def random_clip(rng, n=3, h=32, w=32, amplitude=0.6, smooth=True):
    """Synthetic clip with smooth spatial structure in [-amplitude, amplitude]."""
    from vfiqa.model import bilinear_resize

    if smooth:
        low = rng.uniform(-amplitude, amplitude, size=(n, 3, max(2, h // 4), max(2, w // 4)))
        frames = bilinear_resize(low.astype(np.float32), h, w)
    else:
        frames = rng.uniform(-amplitude, amplitude, size=(n, 3, h, w)).astype(np.float32)
    return np.clip(frames, -1.0, 1.0).astype(np.float32)


def noisy(clip, rng, sigma):
    return np.clip(clip + rng.normal(0.0, sigma, size=clip.shape).astype(np.float32),
                   -1.0, 1.0).astype(np.float32)
