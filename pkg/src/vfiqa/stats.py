"""Evaluation statistics: 2AFC agreement, per-group rank correlations,
sliding-window scoring of long clips, and PSNR/SSIM baselines.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats as sps

from .autodiff import no_grad

REC601_WEIGHTS = (0.299, 0.587, 0.114)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class PairedResult:
    triplet_id: str
    d_a: float
    d_b: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.d_a) and math.isfinite(self.d_b)):
            raise ValueError(f"{self.triplet_id}: distances must be finite")
        if not (0.0 <= self.h <= 1.0):
            raise ValueError(f"{self.triplet_id}: h must lie in [0, 1], got {self.h}")


@dataclass(frozen=True)
class MosRecord:
    group_id: str
    item_id: str
    prediction: float
    mos: float


@dataclass
class CorrelationReport:
    per_group: dict[str, dict[str, float]]
    mean: dict[str, float]
    excluded: list[str]

    @property
    def groups(self) -> int:
        return len(self.per_group)


def two_afc(results: Sequence[PairedResult]) -> float:
    """Mean agreement credit between the metric's binary choice and h.

    The metric picks B when d_B < d_A (g = 1), A when d_A < d_B (g = 0),
    and contributes g = 0.5 on ties; credit = g*h + (1-g)*(1-h).
    """
    if not results:
        raise ValueError("two_afc needs at least one paired result")
    credits = []
    for r in results:
        g = 0.5 if r.d_a == r.d_b else (1.0 if r.d_b < r.d_a else 0.0)
        credits.append(g * r.h + (1.0 - g) * (1.0 - r.h))
    return float(np.mean(credits))


def rank_correlations(records: Sequence[MosRecord]) -> CorrelationReport:
    """SROCC/PLCC/KROCC per group plus their equal-weight means.

    SROCC is the Pearson correlation of average ranks, KROCC the
    tie-corrected tau-b. Groups with a constant prediction or mos vector
    are undefined; they are excluded with a warning rather than scored.
    """
    groups: dict[str, list[MosRecord]] = {}
    for rec in records:
        groups.setdefault(rec.group_id, []).append(rec)
    per_group: dict[str, dict[str, float]] = {}
    excluded: list[str] = []
    for gid, recs in groups.items():
        if len(recs) < 2:
            warnings.warn(f"group {gid!r} has fewer than 2 items; excluded")
            excluded.append(gid)
            continue
        pred = np.asarray([r.prediction for r in recs], dtype=np.float64)
        mos = np.asarray([r.mos for r in recs], dtype=np.float64)
        if np.all(pred == pred[0]) or np.all(mos == mos[0]):
            warnings.warn(f"group {gid!r} has a constant vector; correlation undefined, excluded")
            excluded.append(gid)
            continue
        per_group[gid] = {
            "srocc": float(sps.spearmanr(pred, mos).statistic),
            "plcc": float(sps.pearsonr(pred, mos).statistic),
            "krocc": float(sps.kendalltau(pred, mos, variant="b").statistic),
        }
    if not per_group:
        raise ValueError("no group had computable correlations")
    mean = {
        key: float(np.mean([g[key] for g in per_group.values()]))
        for key in ("srocc", "plcc", "krocc")
    }
    return CorrelationReport(per_group=per_group, mean=mean, excluded=excluded)


def sliding_window_score(video: np.ndarray, reference: np.ndarray, model,
                         window: int = 12, stride: int = 1) -> float:
    """Mean model distance over temporal windows [i, i+window)."""
    from .model import score

    video = np.asarray(video)
    reference = np.asarray(reference)
    n = video.shape[0]
    if n < window:
        raise ValueError(f"clip has {n} frames, below the window {window}")
    scores = []
    with no_grad():
        for start in range(0, n - window + 1, stride):
            scores.append(score(video[start:start + window],
                                reference[start:start + window], model).item())
    return float(np.mean(scores))


# ---- baselines --------------------------------------------------------------------


def _frames_of(v) -> np.ndarray:
    frames = getattr(v, "frames", v)
    return np.asarray(frames, dtype=np.float64)


def psnr(video, reference, peak: float = 2.0) -> float:
    """10*log10(peak^2 / MSE) over all frames; identical clips give +inf."""
    a = _frames_of(video)
    b = _frames_of(reference)
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(taps: int, sigma: float) -> np.ndarray:
    x = np.arange(taps, dtype=np.float64) - (taps - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _valid_gaussian_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation with a 1-D kernel on both axes."""
    taps = kernel.shape[0]
    tmp = sliding_window_view(img, taps, axis=0) @ kernel
    return sliding_window_view(tmp, taps, axis=1) @ kernel


def rgb_to_luma(frame: np.ndarray) -> np.ndarray:
    """Rec.601 luma from a [3, H, W] frame."""
    r, g, b = REC601_WEIGHTS
    return r * frame[0] + g * frame[1] + b * frame[2]


def ssim(video, reference, data_range: float = 2.0) -> float:
    """Mean SSIM over frames: 11-tap Gaussian window (sigma 1.5),
    K1=0.01/K2=0.03, luma per Rec.601, valid-mode windowing."""
    a = _frames_of(video)
    b = _frames_of(reference)
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-2] < SSIM_WINDOW or a.shape[-1] < SSIM_WINDOW:
        raise ValueError(f"frames {a.shape[-2]}x{a.shape[-1]} smaller than the "
                         f"{SSIM_WINDOW}-tap window")
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    per_frame = []
    for fa, fb in zip(a, b):
        x = rgb_to_luma(fa)
        y = rgb_to_luma(fb)
        mu_x = _valid_gaussian_filter(x, kernel)
        mu_y = _valid_gaussian_filter(y, kernel)
        xx = _valid_gaussian_filter(x * x, kernel)
        yy = _valid_gaussian_filter(y * y, kernel)
        xy = _valid_gaussian_filter(x * y, kernel)
        var_x = xx - mu_x * mu_x
        var_y = yy - mu_y * mu_y
        cov = xy - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        per_frame.append(float(np.mean(num / den)))
    return float(np.mean(per_frame))


# ---- IO ---------------------------------------------------------------------------


def read_mos_csv(path: str | Path) -> list[MosRecord]:
    """CSV with header group_id,item_id,prediction,mos."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"group_id", "item_id", "prediction", "mos"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for row in reader:
            records.append(MosRecord(group_id=row["group_id"], item_id=row["item_id"],
                                     prediction=float(row["prediction"]), mos=float(row["mos"])))
    return records


def write_results_json(path: str | Path, *, two_afc_score: float | None = None,
                       correlations: CorrelationReport | None = None) -> dict:
    result: dict = {}
    if two_afc_score is not None:
        result["two_afc"] = two_afc_score
    if correlations is not None:
        result["srocc"] = correlations.mean["srocc"]
        result["plcc"] = correlations.mean["plcc"]
        result["krocc"] = correlations.mean["krocc"]
        result["groups"] = correlations.groups
    Path(path).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    return result
