"""Perceptual quality metric for video frame interpolation.

Subpackages cover the differentiable tensor engine, the pyramid feature
extractor, the comparison head, the trainable metric, dataset tooling,
evaluation statistics, and the annotation service.
"""

from .autodiff import ConfigError, ShapeError, Tensor, backward, no_grad
from .comparison import DistanceOutput, STConfig
from .data import (
    Choice,
    Judgment,
    MultiScalePixelMetric,
    Triplet,
    VideoClip,
    aggregate_judgments,
    auto_annotate,
    load_clip,
    select_patch,
    store_clip,
)
from .model import MetricModel, TrainConfig, bce_loss, preference_prob, score, train
from .optim import AdamW
from .pyramid import PyramidConfig
from .stats import (
    CorrelationReport,
    MosRecord,
    PairedResult,
    psnr,
    rank_correlations,
    sliding_window_score,
    ssim,
    two_afc,
)

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "Choice",
    "ConfigError",
    "CorrelationReport",
    "DistanceOutput",
    "Judgment",
    "MetricModel",
    "MosRecord",
    "MultiScalePixelMetric",
    "PairedResult",
    "PyramidConfig",
    "STConfig",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "Triplet",
    "VideoClip",
    "aggregate_judgments",
    "auto_annotate",
    "backward",
    "bce_loss",
    "load_clip",
    "no_grad",
    "preference_prob",
    "psnr",
    "rank_correlations",
    "score",
    "select_patch",
    "sliding_window_score",
    "ssim",
    "store_clip",
    "train",
    "two_afc",
]
