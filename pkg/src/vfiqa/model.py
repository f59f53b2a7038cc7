"""End-to-end metric: video pair -> distance, pairwise preference
probability, BCE loss, and the siamese training loop.

Both videos of a pair run through the same weights; only their distance
difference is supervised, via sigmoid(d_A - d_B) against the human
preference fraction h (h = 1 means everyone preferred B).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import weights as weights_io
from .autodiff import (
    ShapeError,
    Tensor,
    cast,
    clip,
    log,
    sigmoid,
    stack_scalars,
    sub,
    tmean,
)
from .comparison import STConfig, init_st_weights, level_distance, pool_distance
from .pyramid import PyramidConfig, extract, frames_to_channels, init_pyramid_weights

logger = logging.getLogger(__name__)

PROB_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 8
    epochs: int = 20
    resize_scale_range: tuple[float, float] = (0.5, 1.0)
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        lo, hi = self.resize_scale_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"resize scale range must satisfy 0 < lo <= hi <= 1, got {lo}, {hi}")


class MetricModel:
    """All learnable weights plus the configs that give them meaning."""

    def __init__(self, params: dict[str, Tensor], pyramid_cfg: PyramidConfig,
                 st_cfg: STConfig, frames: int, version: int = weights_io.FORMAT_VERSION):
        self.params = params
        self.pyramid_cfg = pyramid_cfg
        self.st_cfg = st_cfg
        self.frames = frames
        self.version = version

    @classmethod
    def initialize(cls, frames: int = 12, pyramid_cfg: PyramidConfig | None = None,
                   st_cfg: STConfig | None = None, seed: int = 0,
                   dtype=np.float32) -> "MetricModel":
        pyramid_cfg = pyramid_cfg or PyramidConfig()
        st_cfg = st_cfg or STConfig()
        rng = np.random.default_rng(seed)
        params = init_pyramid_weights(pyramid_cfg, rng, dtype)
        concat_channels = [frames * c for c in pyramid_cfg.channels]
        params.update(init_st_weights(st_cfg, concat_channels, rng, dtype))
        return cls(params, pyramid_cfg, st_cfg, frames)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    # ---- serialization ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "meta.frames": float(self.frames),
            "meta.pyramid.levels": float(self.pyramid_cfg.levels),
            "meta.pyramid.second_conv_stride": float(self.pyramid_cfg.second_conv_stride),
            "meta.pyramid.leaky_slope": self.pyramid_cfg.leaky_slope,
            "meta.pyramid.in_channels": float(self.pyramid_cfg.in_channels),
            "meta.st.embed_dim": float(self.st_cfg.embed_dim),
            "meta.st.heads": float(self.st_cfg.heads),
            "meta.st.window": float(self.st_cfg.window),
            "meta.st.use_layer_norm": float(self.st_cfg.use_layer_norm),
            "meta.st.blocks_per_level": float(self.st_cfg.blocks_per_level),
            "meta.st.mlp_ratio": float(self.st_cfg.mlp_ratio),
        }
        tensors: dict[str, np.ndarray] = {
            name: np.asarray(value, dtype=np.float64) for name, value in meta.items()
        }
        tensors["meta.pyramid.channels"] = np.asarray(self.pyramid_cfg.channels, dtype=np.float64)
        tensors.update({name: p.data for name, p in self.params.items()})
        weights_io.save_tensors(path, tensors, self.version)

    @classmethod
    def load(cls, path: str | Path) -> "MetricModel":
        tensors, version = weights_io.load_tensors(path)
        meta = {k: tensors.pop(k) for k in list(tensors) if k.startswith("meta.")}

        def mval(key: str) -> float:
            if key not in meta:
                raise weights_io.WeightsFormatError(f"{path}: missing {key}")
            return float(np.asarray(meta[key]).reshape(-1)[0])

        pyramid_cfg = PyramidConfig(
            levels=int(mval("meta.pyramid.levels")),
            channels=tuple(int(c) for c in np.asarray(meta["meta.pyramid.channels"]).reshape(-1)),
            second_conv_stride=int(mval("meta.pyramid.second_conv_stride")),
            leaky_slope=float(mval("meta.pyramid.leaky_slope")),
            in_channels=int(mval("meta.pyramid.in_channels")),
        )
        st_cfg = STConfig(
            embed_dim=int(mval("meta.st.embed_dim")),
            heads=int(mval("meta.st.heads")),
            window=int(mval("meta.st.window")),
            use_layer_norm=bool(mval("meta.st.use_layer_norm")),
            blocks_per_level=int(mval("meta.st.blocks_per_level")),
            mlp_ratio=int(mval("meta.st.mlp_ratio")),
        )
        params = {name: Tensor(arr, requires_grad=True) for name, arr in tensors.items()}
        return cls(params, pyramid_cfg, st_cfg, int(mval("meta.frames")), version)


# ---- forward --------------------------------------------------------------------


def _clip_tensor(clip_frames: np.ndarray, dtype) -> Tensor:
    return Tensor(np.ascontiguousarray(clip_frames, dtype=dtype))


def video_features(clip_frames: np.ndarray, model: MetricModel) -> list[Tensor]:
    """Pyramid features of all frames, folded to per-level [1, N*C_l, h, w]."""
    frames = _clip_tensor(clip_frames, model.dtype)
    per_level = extract(frames, model.params, model.pyramid_cfg)
    return [frames_to_channels(f) for f in per_level]


def distance_from_features(feats: list[Tensor], ref_feats: list[Tensor],
                           model: MetricModel) -> Tensor:
    per_level = [
        level_distance(f, fr, model.params, model.st_cfg, lv)
        for lv, (f, fr) in enumerate(zip(feats, ref_feats))
    ]
    return pool_distance(per_level).d


def score(video: np.ndarray, reference: np.ndarray, model: MetricModel) -> Tensor:
    """Perceptual distance between a video and its reference.

    Inputs are [N, 3, H, W] arrays (or VideoClip.frames); output is a
    scalar tensor, larger = farther from the reference.
    """
    video = np.asarray(video)
    reference = np.asarray(reference)
    if video.shape != reference.shape:
        raise ShapeError(f"video {video.shape} and reference {reference.shape} differ")
    if video.ndim != 4 or video.shape[0] < 1:
        raise ShapeError(f"expected [N, 3, H, W] with N >= 1, got {video.shape}")
    if video.shape[0] != model.frames:
        raise ShapeError(
            f"model was built for {model.frames}-frame clips, got {video.shape[0]} frames")
    return distance_from_features(video_features(video, model),
                                  video_features(reference, model), model)


def preference_prob(d_a: Tensor, d_b: Tensor) -> Tensor:
    """sigmoid(d_A - d_B): probability mass on 'B is preferred'."""
    return sigmoid(sub(d_a, d_b))


def bce_loss(p: Tensor, h: float) -> Tensor:
    """Binary cross entropy against the preference fraction h in [0, 1].

    Computed in float64 with p clamped away from {0, 1} so extreme
    distance gaps cannot produce log(0).
    """
    h = float(h)
    if not (0.0 <= h <= 1.0):
        raise ValueError(f"h must lie in [0, 1], got {h}")
    p64 = cast(p, np.float64) if p.dtype != np.float64 else p
    p64 = clip(p64, PROB_EPS, 1.0 - PROB_EPS)
    return -(h * log(p64) + (1.0 - h) * log(1.0 - p64))


def triplet_loss(v_a: np.ndarray, v_b: np.ndarray, v_ref: np.ndarray,
                 h: float, model: MetricModel) -> Tensor:
    """Siamese loss of one triplet; reference features are computed once."""
    ref_feats = video_features(v_ref, model)
    d_a = distance_from_features(video_features(v_a, model), ref_feats, model)
    d_b = distance_from_features(video_features(v_b, model), ref_feats, model)
    return bce_loss(preference_prob(d_a, d_b), h)


# ---- resizing -------------------------------------------------------------------


def bilinear_resize(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of [N, C, H, W] frames (half-pixel centers)."""
    n, c, h, w = frames.shape
    if (h, w) == (out_h, out_w):
        return frames
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(np.intp)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0).astype(frames.dtype)
    wx = np.clip(xs - x0, 0.0, 1.0).astype(frames.dtype)
    top = frames[:, :, y0][:, :, :, x0] * (1 - wx) + frames[:, :, y0][:, :, :, x1] * wx
    bot = frames[:, :, y1][:, :, :, x0] * (1 - wx) + frames[:, :, y1][:, :, :, x1] * wx
    return (top * (1 - wy[:, None]) + bot * wy[:, None]).astype(frames.dtype)


def snap_resize_dims(h: int, w: int, scale: float, multiple: int = 32) -> tuple[int, int]:
    """Scaled dims snapped to a multiple so the pyramid stays well formed."""

    def snap(dim: int) -> int:
        cap = (dim // multiple) * multiple
        if cap < multiple:
            raise ShapeError(f"dimension {dim} too small to resize to a multiple of {multiple}")
        target = int(round(dim * scale / multiple)) * multiple
        return min(max(target, multiple), cap)

    return snap(h), snap(w)


# ---- training -------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    steps: int
    mean_loss: float


def train(manifest, config: TrainConfig, model_out_path: str | Path | None = None,
          model: MetricModel | None = None, stop_fn=None,
          clip_cache_size: int = 256) -> tuple[MetricModel, list[EpochStats]]:
    """Siamese training over a triplet manifest.

    ``manifest`` is a path to a JSON-lines manifest or a pre-loaded list of
    (Triplet, clip loader) friendly records; see data.read_manifest. Each
    step scores both candidates against the shared reference, applies the
    sigmoid/BCE comparison loss, and takes one AdamW step. All three clips
    of a triplet are resized jointly by a scale drawn from
    config.resize_scale_range. ``stop_fn(model, epoch, stats)`` may return
    True to stop early. Fully reproducible for a fixed seed.
    """
    from .data import load_clip, read_manifest
    from .optim import AdamW

    rng = np.random.default_rng(config.seed)

    if isinstance(manifest, (str, Path)):
        manifest_path = Path(manifest)
        triplets = read_manifest(manifest_path)
        root = manifest_path.parent
    else:
        triplets = list(manifest)
        root = Path(".")
    triplets = [t for t in triplets if t.h is not None]
    if not triplets:
        raise ValueError("manifest holds no labeled triplets")

    cache: dict[str, np.ndarray] = {}

    def clip_frames(ref: str) -> np.ndarray:
        if ref not in cache:
            if len(cache) >= clip_cache_size:
                cache.pop(next(iter(cache)))
            path = Path(ref)
            cache[ref] = load_clip(path if path.is_absolute() else root / ref).frames
        return cache[ref]

    if model is None:
        first = clip_frames(triplets[0].ref)
        model = MetricModel.initialize(frames=first.shape[0], seed=config.seed)
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)

    history: list[EpochStats] = []
    total_steps = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(triplets))
        losses: list[float] = []
        steps = 0
        for start in range(0, len(order), config.batch_size):
            batch = [triplets[i] for i in order[start:start + config.batch_size]]
            sample_losses = []
            for trip in batch:
                try:
                    a = clip_frames(trip.a)
                    b = clip_frames(trip.b)
                    r = clip_frames(trip.ref)
                except (OSError, ValueError) as err:
                    logger.warning("skipping triplet %s: %s", trip.id, err)
                    continue
                scale = rng.uniform(*config.resize_scale_range)
                if a.shape != b.shape or a.shape != r.shape:
                    logger.warning("skipping triplet %s: clip shapes differ", trip.id)
                    continue
                if a.shape[0] != model.frames:
                    logger.warning("skipping triplet %s: %d frames, model expects %d",
                                   trip.id, a.shape[0], model.frames)
                    continue
                th, tw = snap_resize_dims(a.shape[2], a.shape[3], scale)
                a_r = bilinear_resize(a, th, tw)
                b_r = bilinear_resize(b, th, tw)
                r_r = bilinear_resize(r, th, tw)
                sample_losses.append(triplet_loss(a_r, b_r, r_r, trip.h, model))
            if not sample_losses:
                continue
            batch_loss = tmean(stack_scalars(sample_losses))
            model.zero_grad()
            batch_loss.backward()
            opt.step()
            losses.append(batch_loss.item())
            steps += 1
            total_steps += 1
        if steps == 0:
            raise RuntimeError(f"epoch {epoch}: no usable triplets")
        stats = EpochStats(epoch=epoch, steps=steps, mean_loss=float(np.mean(losses)))
        history.append(stats)
        logger.info("epoch %d: %d steps, mean loss %.6f", epoch, steps, stats.mean_loss)
        if stop_fn is not None and stop_fn(model, epoch, stats):
            break
    if model_out_path is not None:
        model.save(model_out_path)
    return model, history
