"""Feature-comparison head: normalized difference, 32-d embedding,
windowed-attention blocks without layer normalization, and pooling of
all levels into one distance value.

Layer norm is deliberately absent by default: normalizing the embedded
differences washes out exactly the signal being measured. A config flag
re-enables it for ablation runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ConfigError,
    ShapeError,
    Tensor,
    absolute,
    add,
    concat,
    div,
    gelu,
    reshape,
    sqrt,
    square,
    sub,
    tmean,
    transpose,
    tsum,
)
from .nn import conv2d, he_uniform, layer_norm, linear, ones_param, window_attention, zeros_param

NORM_EPS = 1e-10
_NORM_FLOOR = 1e-20


@dataclass(frozen=True)
class STConfig:
    embed_dim: int = 32
    heads: int = 2
    window: int = 4
    use_layer_norm: bool = False
    blocks_per_level: int = 2
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")


@dataclass
class DistanceOutput:
    d: Tensor
    per_level: list[Tensor]


def unit_normalize(f: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Scale each spatial position's channel vector to unit L2 norm."""
    n2 = tsum(square(f), axis=1, keepdims=True)
    norm = sqrt(add(n2, _NORM_FLOOR))
    return div(f, add(norm, eps))


def normalized_diff(f: Tensor, f_ref: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Elementwise |unit_normalize(f) - unit_normalize(f_ref)|."""
    if f.shape != f_ref.shape:
        raise ShapeError(f"feature shapes differ: {f.shape} vs {f_ref.shape}")
    return absolute(sub(unit_normalize(f, eps), unit_normalize(f_ref, eps)))


def assemble_and_embed(f_diff: Tensor, f_hat: Tensor, f_ref_hat: Tensor,
                       embed_weight: Tensor, embed_bias: Tensor) -> Tensor:
    """Concatenate (diff, input, reference) channels and project to embed_dim
    with a 1x1 convolution."""
    if not (f_diff.shape == f_hat.shape == f_ref_hat.shape):
        raise ShapeError(
            f"inputs must be shape-identical, got {f_diff.shape}, {f_hat.shape}, {f_ref_hat.shape}")
    cat = concat([f_diff, f_hat, f_ref_hat], axis=1)
    if embed_weight.shape[1] != cat.shape[1]:
        raise ShapeError(
            f"embedding expects {embed_weight.shape[1]} channels, got {cat.shape[1]}")
    return conv2d(cat, embed_weight, embed_bias, stride=1, padding=0)


def _mlp(x_tokens: Tensor, w: dict[str, Tensor], prefix: str) -> Tensor:
    h = linear(x_tokens, w[prefix + ".fc1.weight"], w[prefix + ".fc1.bias"])
    h = gelu(h)
    return linear(h, w[prefix + ".fc2.weight"], w[prefix + ".fc2.bias"])


def _tokens(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    return reshape(transpose(reshape(x, (b, c, h * w)), (0, 2, 1)), (b, h * w, c))


def _untokens(t: Tensor, b: int, c: int, h: int, w: int) -> Tensor:
    return reshape(transpose(t, (0, 2, 1)), (b, c, h, w))


def swin_stack(x: Tensor, weights: dict[str, Tensor], cfg: STConfig,
               prefix: str) -> Tensor:
    """blocks_per_level transformer blocks; even blocks use aligned windows,
    odd blocks shifted ones. Residual attention + residual MLP, with LN
    sublayers only when cfg.use_layer_norm."""
    if x.shape[1] != cfg.embed_dim:
        raise ShapeError(f"expected {cfg.embed_dim} channels, got {x.shape[1]}")
    b, c, h, w = x.shape
    for blk in range(cfg.blocks_per_level):
        base = f"{prefix}.block{blk}"
        attn_in = x
        if cfg.use_layer_norm:
            toks = _tokens(x)
            toks = layer_norm(toks, weights[base + ".ln1.gamma"], weights[base + ".ln1.beta"])
            attn_in = _untokens(toks, b, c, h, w)
        attn_out = window_attention(
            attn_in,
            weights[base + ".attn.qkv.weight"], weights[base + ".attn.qkv.bias"],
            weights[base + ".attn.proj.weight"], weights[base + ".attn.proj.bias"],
            window=cfg.window, heads=cfg.heads, shifted=(blk % 2 == 1))
        x = add(x, attn_out)
        mlp_in = _tokens(x)
        if cfg.use_layer_norm:
            mlp_in = layer_norm(mlp_in, weights[base + ".ln2.gamma"], weights[base + ".ln2.beta"])
        x = add(x, _untokens(_mlp(mlp_in, weights, base + ".mlp"), b, c, h, w))
    return x


def pool_distance(per_level: list[Tensor]) -> DistanceOutput:
    """Element mean per level, then equal-weight mean across levels."""
    if not per_level:
        raise ShapeError("pool_distance needs at least one level")
    means = [tmean(t) for t in per_level]
    total = means[0]
    for m in means[1:]:
        total = add(total, m)
    return DistanceOutput(d=div(total, float(len(means))), per_level=means)


def init_st_weights(cfg: STConfig, concat_channels_per_level: list[int],
                    rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    """Per-level embedding + attention/MLP block weights.

    concat_channels_per_level holds N*C_l per level; the embedding consumes
    three of those blocks (diff, input, reference).
    """
    d = cfg.embed_dim
    hidden = d * cfg.mlp_ratio
    weights: dict[str, Tensor] = {}
    for lv, nc in enumerate(concat_channels_per_level):
        base = f"st.level{lv}"
        cin = 3 * nc
        weights[base + ".embed.weight"] = he_uniform(rng, (d, cin, 1, 1), cin, dtype)
        weights[base + ".embed.bias"] = zeros_param((d,), dtype)
        for blk in range(cfg.blocks_per_level):
            bb = f"{base}.block{blk}"
            weights[bb + ".attn.qkv.weight"] = he_uniform(rng, (d, 3 * d), d, dtype)
            weights[bb + ".attn.qkv.bias"] = zeros_param((3 * d,), dtype)
            weights[bb + ".attn.proj.weight"] = he_uniform(rng, (d, d), d, dtype)
            weights[bb + ".attn.proj.bias"] = zeros_param((d,), dtype)
            weights[bb + ".mlp.fc1.weight"] = he_uniform(rng, (d, hidden), d, dtype)
            weights[bb + ".mlp.fc1.bias"] = zeros_param((hidden,), dtype)
            weights[bb + ".mlp.fc2.weight"] = he_uniform(rng, (hidden, d), hidden, dtype)
            weights[bb + ".mlp.fc2.bias"] = zeros_param((d,), dtype)
            if cfg.use_layer_norm:
                weights[bb + ".ln1.gamma"] = ones_param((d,), dtype)
                weights[bb + ".ln1.beta"] = zeros_param((d,), dtype)
                weights[bb + ".ln2.gamma"] = ones_param((d,), dtype)
                weights[bb + ".ln2.beta"] = zeros_param((d,), dtype)
    return weights


def level_distance(f: Tensor, f_ref: Tensor, weights: dict[str, Tensor],
                   cfg: STConfig, level: int) -> Tensor:
    """Full comparison head for one level's concatenated features."""
    base = f"st.level{level}"
    f_hat = unit_normalize(f)
    f_ref_hat = unit_normalize(f_ref)
    diff = absolute(sub(f_hat, f_ref_hat))
    emb = assemble_and_embed(diff, f_hat, f_ref_hat,
                             weights[base + ".embed.weight"], weights[base + ".embed.bias"])
    return swin_stack(emb, weights, cfg, base)
