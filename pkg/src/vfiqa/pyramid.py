"""Per-frame multi-level feature extractor and cross-frame concatenation.

Five levels, each two 3x3 convs (second one stride 2) followed by a
leaky rectifier, so level l runs at 1/2^l of the input resolution.
Weights are shared across frames and across both videos of a pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ConfigError, ShapeError, Tensor, concat, leaky_relu, reshape
from .nn import conv2d, he_uniform, zeros_param

CHANNELS_PER_LEVEL = (16, 32, 64, 96, 128)
MIN_FRAME_EXTENT = 32


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 5
    channels: tuple[int, ...] = CHANNELS_PER_LEVEL
    convs_per_level: int = 2
    second_conv_stride: int = 2
    leaky_slope: float = 0.1
    in_channels: int = 3

    def __post_init__(self):
        if len(self.channels) != self.levels:
            raise ConfigError(f"{self.levels} levels need {self.levels} channel counts, got {len(self.channels)}")
        if any(c <= 0 for c in self.channels):
            raise ConfigError("channel counts must be positive")


def init_pyramid_weights(cfg: PyramidConfig, rng: np.random.Generator,
                         dtype=np.float32) -> dict[str, Tensor]:
    """He-uniform conv kernels, zero biases, keyed by level/layer."""
    weights: dict[str, Tensor] = {}
    c_in = cfg.in_channels
    for lv, c_out in enumerate(cfg.channels):
        for layer, (ci, co) in enumerate(((c_in, c_out), (c_out, c_out))):
            base = f"pyramid.level{lv}.conv{layer}"
            weights[base + ".weight"] = he_uniform(rng, (co, ci, 3, 3), ci * 9, dtype)
            weights[base + ".bias"] = zeros_param((co,), dtype)
        c_in = c_out
    return weights


def extract(frame: Tensor, weights: dict[str, Tensor], cfg: PyramidConfig) -> list[Tensor]:
    """Run one batch of frames [B, 3, H, W] through all levels.

    Returns per-level features [B, C_l, H/2^l, W/2^l].
    """
    if frame.ndim != 4:
        raise ShapeError(f"frame batch must be [B, C, H, W], got rank {frame.ndim}")
    b, c, h, w = frame.shape
    if c != cfg.in_channels:
        raise ShapeError(f"frame has {c} channels, extractor expects {cfg.in_channels}")
    if h < MIN_FRAME_EXTENT or w < MIN_FRAME_EXTENT:
        raise ShapeError(f"frame extent {h}x{w} below minimum {MIN_FRAME_EXTENT}")
    feats = []
    x = frame
    for lv in range(cfg.levels):
        for layer in range(cfg.convs_per_level):
            base = f"pyramid.level{lv}.conv{layer}"
            stride = cfg.second_conv_stride if layer == cfg.convs_per_level - 1 else 1
            x = conv2d(x, weights[base + ".weight"], weights[base + ".bias"],
                       stride=stride, padding=1)
            x = leaky_relu(x, cfg.leaky_slope)
        feats.append(x)
    return feats


def concat_frames(per_frame: list[list[Tensor]]) -> list[Tensor]:
    """Concatenate per-frame level features along channels, temporal order.

    ``per_frame[k][l]`` is frame k's level-l tensor; all frames must agree
    per level in shape.
    """
    if not per_frame:
        raise ShapeError("no frames to concatenate")
    levels = len(per_frame[0])
    for k, lv_feats in enumerate(per_frame):
        if len(lv_feats) != levels:
            raise ShapeError(f"frame {k} has {len(lv_feats)} levels, expected {levels}")
        for lv in range(levels):
            if lv_feats[lv].shape != per_frame[0][lv].shape:
                raise ShapeError(
                    f"frame {k} level {lv} shape {lv_feats[lv].shape} != {per_frame[0][lv].shape}")
    return [concat([pf[lv] for pf in per_frame], axis=1) for lv in range(levels)]


def frames_to_channels(level_feats: Tensor) -> Tensor:
    """Fold a frame-as-batch tensor [N, C, h, w] into [1, N*C, h, w].

    Row-major layout makes this exactly channel concatenation in temporal
    order, without touching the data.
    """
    n, c, h, w = level_feats.shape
    return reshape(level_feats, (1, n * c, h, w))
