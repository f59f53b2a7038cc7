"""Triplet dataset construction: clip IO, highest-error patch selection,
automatic annotation by reference-metric thresholding, and aggregation of
human judgments.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
from PIL import Image

AUTO_THRESHOLD = 0.15
H_QUANTIZED = {0.0: 0.0, 1.0 / 3.0: 0.33, 2.0 / 3.0: 0.66, 1.0: 1.0}

_FRAME_RE = re.compile(r"^frame_(\d+)\.png$")


class ClipError(ValueError):
    """A clip directory is missing, malformed, or has frame gaps."""


@dataclass
class VideoClip:
    """Ordered frames [N, 3, H, W], float32 in [-1, 1]."""

    frames: np.ndarray
    id: str = ""
    fps_hint: float | None = None

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[0] < 1 or f.shape[1] != 3:
            raise ClipError(f"frames must be [N, 3, H, W] with N >= 1, got {f.shape}")
        if f.dtype != np.float32:
            f = f.astype(np.float32)
        if f.size and (f.min() < -1.0 or f.max() > 1.0):
            raise ClipError("frame values must lie in [-1, 1]")
        self.frames = f

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


class Choice(str, Enum):
    A_SURE = "A_sure"
    A_MAYBE = "A_maybe"
    B_MAYBE = "B_maybe"
    B_SURE = "B_sure"

    @property
    def prefers_b(self) -> bool:
        return self in (Choice.B_MAYBE, Choice.B_SURE)


@dataclass(frozen=True)
class Judgment:
    triplet_id: str
    annotator_id: str
    choice: Choice
    timestamp: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        return {
            "triplet_id": self.triplet_id,
            "annotator_id": self.annotator_id,
            "choice": self.choice.value,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Judgment":
        return cls(obj["triplet_id"], obj["annotator_id"], Choice(obj["choice"]),
                   float(obj["timestamp"]))


@dataclass
class Triplet:
    """Two candidate clips, their reference, and the preference label."""

    id: str
    a: str
    b: str
    ref: str
    h: float | None = None
    source: str = "unlabeled"

    def __post_init__(self):
        if self.source not in ("auto", "human", "unlabeled"):
            raise ValueError(f"unknown source {self.source!r}")
        if (self.h is None) != (self.source == "unlabeled"):
            raise ValueError("h must be present exactly when the triplet is labeled")
        if self.h is not None and not (0.0 <= self.h <= 1.0):
            raise ValueError(f"h must lie in [0, 1], got {self.h}")


class RefMetric(Protocol):
    """Full-reference per-frame metric; lower means more similar."""

    def __call__(self, frame: np.ndarray, ref_frame: np.ndarray) -> float: ...


class MultiScalePixelMetric:
    """Bundled stand-in reference metric: mean |difference| over a blurred
    multi-scale stack. Deterministic, non-negative, needs no external
    assets; any stronger full-reference metric can be plugged in instead.
    """

    def __init__(self, scales: int = 4):
        self.scales = scales

    @staticmethod
    def _halve(x: np.ndarray) -> np.ndarray:
        h, w = x.shape[-2] // 2 * 2, x.shape[-1] // 2 * 2
        x = x[..., :h, :w]
        return 0.25 * (x[..., 0::2, 0::2] + x[..., 0::2, 1::2]
                       + x[..., 1::2, 0::2] + x[..., 1::2, 1::2])

    def __call__(self, frame: np.ndarray, ref_frame: np.ndarray) -> float:
        a = np.asarray(frame, dtype=np.float64)
        b = np.asarray(ref_frame, dtype=np.float64)
        if a.shape != b.shape:
            raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
        scores = []
        for _ in range(self.scales):
            scores.append(float(np.mean(np.abs(a - b))))
            if min(a.shape[-2], a.shape[-1]) < 2:
                break
            a, b = self._halve(a), self._halve(b)
        return float(np.mean(scores))


def video_metric(clip: VideoClip, ref: VideoClip, metric: RefMetric) -> float:
    """Video score = mean of the per-frame metric."""
    if clip.frames.shape != ref.frames.shape:
        raise ValueError("clips must be shape-identical")
    return float(np.mean([metric(f, r) for f, r in zip(clip.frames, ref.frames)]))


# ---- patch selection --------------------------------------------------------------


def select_patch(v_a: VideoClip, v_b: VideoClip, patch: int = 256,
                 stride: int = 1) -> tuple[int, int]:
    """Top-left corner of the patch window with the largest summed
    mean-|difference|; ties break to the smallest (row, col).
    """
    if v_a.frames.shape != v_b.frames.shape:
        raise ValueError("clips must be shape-identical")
    _, _, h, w = v_a.frames.shape
    if patch > h or patch > w:
        raise ValueError(f"patch {patch} exceeds frame extent {h}x{w}")
    err = np.mean(np.abs(v_a.frames.astype(np.float64) - v_b.frames.astype(np.float64)),
                  axis=(0, 1))
    # summed-area table: window sums for every candidate corner at once
    sat = np.zeros((h + 1, w + 1))
    sat[1:, 1:] = err.cumsum(axis=0).cumsum(axis=1)
    rows = np.arange(0, h - patch + 1, stride)
    cols = np.arange(0, w - patch + 1, stride)
    sums = (sat[np.ix_(rows + patch, cols + patch)]
            - sat[np.ix_(rows, cols + patch)]
            - sat[np.ix_(rows + patch, cols)]
            + sat[np.ix_(rows, cols)])
    flat = int(np.argmax(sums))
    r, c = divmod(flat, sums.shape[1])
    return int(rows[r]), int(cols[c])


# ---- annotation -------------------------------------------------------------------


def auto_annotate(v_a: VideoClip, v_b: VideoClip, v_ref: VideoClip,
                  metric: RefMetric, threshold: float = AUTO_THRESHOLD) -> float | None:
    """Label h in {0, 1} when the metric gap is decisive, else None (defer).

    h = 1 when B scores strictly closer to the reference; the gap must
    exceed the threshold strictly.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    m_a = video_metric(v_a, v_ref, metric)
    m_b = video_metric(v_b, v_ref, metric)
    if abs(m_a - m_b) > threshold:
        return 1.0 if m_b < m_a else 0.0
    return None


def aggregate_judgments(judgments: Sequence[Judgment]) -> float:
    """Mean preference-for-B over exactly three distinct annotators."""
    if len(judgments) != 3:
        raise ValueError(f"need exactly 3 judgments, got {len(judgments)}")
    ids = {j.triplet_id for j in judgments}
    if len(ids) != 1:
        raise ValueError(f"judgments span multiple triplets: {sorted(ids)}")
    annotators = {j.annotator_id for j in judgments}
    if len(annotators) != 3:
        raise ValueError("judgments must come from 3 distinct annotators")
    return float(np.mean([1.0 if j.choice.prefers_b else 0.0 for j in judgments]))


def quantize_h(h: float) -> float:
    """Snap an aggregated fraction to the stored {0, 0.33, 0.66, 1} grid."""
    key = min(H_QUANTIZED, key=lambda q: abs(q - h))
    if abs(key - h) > 1e-6:
        raise ValueError(f"h={h} is not a third-fraction")
    return H_QUANTIZED[key]


# ---- clip IO ----------------------------------------------------------------------


def load_clip(path: str | Path) -> VideoClip:
    """Load frame_000.png ... frame_{N-1}.png as a [-1, 1] clip."""
    path = Path(path)
    if not path.is_dir():
        raise ClipError(f"{path} is not a clip directory")
    indexed: dict[int, Path] = {}
    for p in path.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed[int(m.group(1))] = p
    if not indexed:
        raise ClipError(f"{path} holds no frame_*.png files")
    n = max(indexed) + 1
    missing = sorted(set(range(n)) - set(indexed))
    if missing:
        raise ClipError(f"{path} is missing frames {missing}")
    frames = []
    for i in range(n):
        img = np.asarray(Image.open(indexed[i]).convert("RGB"), dtype=np.float32)
        frames.append(img.transpose(2, 0, 1) / 255.0 * 2.0 - 1.0)
    return VideoClip(frames=np.stack(frames), id=path.name)


def store_clip(clip: VideoClip, path: str | Path) -> None:
    """Inverse of load_clip up to 8-bit quantization."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(clip.n_frames - 1)))
    for i, frame in enumerate(clip.frames):
        u8 = np.clip(np.round((frame + 1.0) * 127.5), 0, 255).astype(np.uint8)
        Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(
            path / f"frame_{i:0{width}d}.png")


# ---- manifest and judgment log ----------------------------------------------------


def read_manifest(path: str | Path) -> list[Triplet]:
    """One JSON object per line: {"id","a","b","ref","h","source"}."""
    triplets = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                triplets.append(Triplet(id=obj["id"], a=obj["a"], b=obj["b"], ref=obj["ref"],
                                        h=obj.get("h"), source=obj.get("source", "unlabeled")))
            except (KeyError, ValueError) as err:
                raise ValueError(f"{path}:{line_no}: bad manifest record: {err}") from err
    return triplets


def write_manifest(path: str | Path, triplets: Iterable[Triplet]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps({"id": t.id, "a": t.a, "b": t.b, "ref": t.ref,
                                 "h": t.h, "source": t.source}) + "\n")
    tmp.replace(path)


def append_judgment(path: str | Path, judgment: Judgment) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(judgment.to_json()) + "\n")
        fh.flush()


def read_judgments(path: str | Path) -> list[Judgment]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Judgment.from_json(json.loads(line)))
    return out
