"""Dataset pipeline: patch selection, auto-annotation, judgment
aggregation, clip and manifest IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfiqa.data import (
    Choice,
    ClipError,
    Judgment,
    MultiScalePixelMetric,
    Triplet,
    VideoClip,
    aggregate_judgments,
    auto_annotate,
    load_clip,
    quantize_h,
    read_judgments,
    read_manifest,
    select_patch,
    store_clip,
    append_judgment,
    write_manifest,
)


def _clip(frames):
    return VideoClip(frames=np.asarray(frames, dtype=np.float32))


def _zeros(n=2, h=40, w=40):
    return _clip(np.zeros((n, 3, h, w)))


class TestSelectPatch:
    def test_identical_clips_tie_break_origin(self):
        a = _zeros()
        b = _zeros()
        assert select_patch(a, b, patch=16) == (0, 0)

    def test_block_difference_found(self, rng):
        frames_a = np.zeros((2, 3, 300, 300), dtype=np.float32)
        frames_b = frames_a.copy()
        # a bright block whose best 256-cover starts at (10, 20)
        frames_b[:, :, 10:266, 20:276] += 0.5
        assert select_patch(_clip(frames_a), _clip(frames_b), patch=256) == (10, 20)

    def test_constant_shift_invariance(self, rng):
        fa = rng.uniform(-0.4, 0.4, size=(2, 3, 50, 50)).astype(np.float32)
        fb = rng.uniform(-0.4, 0.4, size=(2, 3, 50, 50)).astype(np.float32)
        base = select_patch(_clip(fa), _clip(fb), patch=24)
        shifted = select_patch(_clip(fa + 0.3), _clip(fb + 0.3), patch=24)
        assert base == shifted

    def test_exhaustive_oracle(self, rng):
        fa = rng.uniform(-1, 1, size=(2, 3, 40, 40)).astype(np.float32)
        fb = rng.uniform(-1, 1, size=(2, 3, 40, 40)).astype(np.float32)
        patch = 17
        err = np.mean(np.abs(fa.astype(np.float64) - fb.astype(np.float64)), axis=(0, 1))
        best, best_sum = None, -1.0
        for r in range(40 - patch + 1):
            for c in range(40 - patch + 1):
                s = err[r:r + patch, c:c + patch].sum()
                if s > best_sum + 1e-12:
                    best, best_sum = (r, c), s
        assert select_patch(_clip(fa), _clip(fb), patch=patch) == best

    def test_patch_too_large(self):
        with pytest.raises(ValueError, match="patch"):
            select_patch(_zeros(h=20, w=20), _zeros(h=20, w=20), patch=32)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_result_in_bounds(self, seed):
        r = np.random.default_rng(seed)
        fa = r.uniform(-1, 1, size=(1, 3, 30, 37)).astype(np.float32)
        fb = r.uniform(-1, 1, size=(1, 3, 30, 37)).astype(np.float32)
        row, col = select_patch(_clip(fa), _clip(fb), patch=12)
        assert 0 <= row <= 30 - 12
        assert 0 <= col <= 37 - 12


class _FixedMetric:
    """Returns a canned score per clip identity (by mean value)."""

    def __init__(self, table):
        self.table = table

    def __call__(self, frame, ref_frame):
        return self.table[round(float(frame.mean()), 3)]


def _const_clip(value, n=1, h=8, w=8):
    return _clip(np.full((n, 3, h, w), value))


class TestAutoAnnotate:
    def _run(self, m_a, m_b, threshold=0.15):
        a = _const_clip(0.1)
        b = _const_clip(0.2)
        r = _const_clip(0.0)
        metric = _FixedMetric({0.1: m_a, 0.2: m_b})
        return auto_annotate(a, b, r, metric, threshold)

    def test_decisive_gap_prefers_lower(self):
        assert self._run(0.50, 0.30) == 1.0
        assert self._run(0.30, 0.50) == 0.0

    def test_small_gap_defers(self):
        assert self._run(0.40, 0.35) is None

    def test_boundary_gap_defers(self):
        # strict inequality: a gap exactly equal to the threshold defers
        assert self._run(0.50, 0.25, threshold=0.25) is None
        assert self._run(0.40, 0.25, threshold=abs(0.40 - 0.25)) is None

    def test_antisymmetry(self, rng):
        for _ in range(20):
            m_a, m_b = rng.uniform(0, 1, 2)
            a = _const_clip(0.1)
            b = _const_clip(0.2)
            r = _const_clip(0.0)
            metric = _FixedMetric({0.1: m_a, 0.2: m_b})
            swapped_metric = _FixedMetric({0.1: m_a, 0.2: m_b})
            h_fwd = auto_annotate(a, b, r, metric)
            h_rev = auto_annotate(b, a, r, swapped_metric)
            if h_fwd is None:
                assert h_rev is None
            else:
                assert h_rev == 1.0 - h_fwd

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            self._run(0.5, 0.3, threshold=0.0)

    def test_bundled_metric_orders_noise(self, rng):
        base = rng.uniform(-0.5, 0.5, size=(2, 3, 32, 32)).astype(np.float32)
        light = np.clip(base + rng.normal(0, 0.02, base.shape), -1, 1).astype(np.float32)
        heavy = np.clip(base + rng.normal(0, 0.4, base.shape), -1, 1).astype(np.float32)
        metric = MultiScalePixelMetric()
        h = auto_annotate(_clip(heavy), _clip(light), _clip(base), metric, threshold=0.01)
        assert h == 1.0  # B (light noise) is closer


def _j(annotator, choice, tid="t0"):
    return Judgment(triplet_id=tid, annotator_id=annotator, choice=choice)


class TestAggregateJudgments:
    def test_two_thirds(self):
        h = aggregate_judgments([_j("u1", Choice.B_SURE), _j("u2", Choice.B_MAYBE),
                                 _j("u3", Choice.A_MAYBE)])
        assert h == pytest.approx(2.0 / 3.0)
        assert quantize_h(h) == 0.66

    def test_all_a(self):
        h = aggregate_judgments([_j("u1", Choice.A_SURE), _j("u2", Choice.A_SURE),
                                 _j("u3", Choice.A_MAYBE)])
        assert h == 0.0

    def test_all_b_sure(self):
        h = aggregate_judgments([_j("u1", Choice.B_SURE), _j("u2", Choice.B_SURE),
                                 _j("u3", Choice.B_SURE)])
        assert h == 1.0

    def test_wrong_count(self):
        with pytest.raises(ValueError, match="3"):
            aggregate_judgments([_j("u1", Choice.A_SURE)])

    def test_duplicate_annotator(self):
        with pytest.raises(ValueError, match="distinct"):
            aggregate_judgments([_j("u1", Choice.A_SURE), _j("u1", Choice.B_SURE),
                                 _j("u2", Choice.B_SURE)])

    def test_mixed_triplets(self):
        with pytest.raises(ValueError, match="triplet"):
            aggregate_judgments([_j("u1", Choice.A_SURE), _j("u2", Choice.B_SURE),
                                 _j("u3", Choice.B_SURE, tid="other")])

    def test_permutation_invariance(self):
        js = [_j("u1", Choice.B_SURE), _j("u2", Choice.A_MAYBE), _j("u3", Choice.B_MAYBE)]
        base = aggregate_judgments(js)
        assert aggregate_judgments(js[::-1]) == base
        assert aggregate_judgments([js[1], js[2], js[0]]) == base

    def test_quantization_grid(self):
        assert quantize_h(0.0) == 0.0
        assert quantize_h(1.0 / 3.0) == 0.33
        assert quantize_h(2.0 / 3.0) == 0.66
        assert quantize_h(1.0) == 1.0


class TestClipIO:
    def test_round_trip_count_and_error(self, tmp_path, rng):
        frames = rng.uniform(-1, 1, size=(12, 3, 16, 16)).astype(np.float32)
        clip = VideoClip(frames=frames)
        store_clip(clip, tmp_path / "c")
        loaded = load_clip(tmp_path / "c")
        assert loaded.n_frames == 12
        assert np.abs(loaded.frames - frames).max() <= 1.0 / 255.0 + 1e-7

    def test_endpoint_mapping(self, tmp_path):
        from PIL import Image
        d = tmp_path / "c"
        d.mkdir()
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        img[0, 0] = 255
        Image.fromarray(img, mode="RGB").save(d / "frame_000.png")
        clip = load_clip(d)
        assert clip.frames[0, 0, 0, 0] == 1.0     # pixel 255 -> +1.0
        assert clip.frames[0, 0, 1, 1] == -1.0    # pixel 0 -> -1.0

    def test_missing_frame_reported(self, tmp_path, rng):
        frames = rng.uniform(-1, 1, size=(3, 3, 8, 8)).astype(np.float32)
        store_clip(VideoClip(frames=frames), tmp_path / "c")
        (tmp_path / "c" / "frame_001.png").unlink()
        with pytest.raises(ClipError, match=r"\[1\]"):
            load_clip(tmp_path / "c")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ClipError):
            load_clip(tmp_path / "nope")

    def test_value_range_enforced(self):
        with pytest.raises(ClipError, match="range|\\[-1, 1\\]"):
            VideoClip(frames=np.full((1, 3, 4, 4), 1.5, dtype=np.float32))


class TestManifestIO:
    def test_round_trip(self, tmp_path):
        triplets = [
            Triplet(id="t0", a="a0", b="b0", ref="r0", h=0.66, source="human"),
            Triplet(id="t1", a="a1", b="b1", ref="r1", h=1.0, source="auto"),
            Triplet(id="t2", a="a2", b="b2", ref="r2"),
        ]
        path = tmp_path / "m.jsonl"
        write_manifest(path, triplets)
        assert read_manifest(path) == triplets

    def test_label_source_consistency(self):
        with pytest.raises(ValueError):
            Triplet(id="t", a="a", b="b", ref="r", h=None, source="human")
        with pytest.raises(ValueError):
            Triplet(id="t", a="a", b="b", ref="r", h=0.5, source="unlabeled")

    def test_bad_line_reports_position(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "t0", "a": "a"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_manifest(path)

    def test_judgment_log_round_trip(self, tmp_path):
        path = tmp_path / "j.jsonl"
        j1 = Judgment(triplet_id="t0", annotator_id="u1", choice=Choice.B_MAYBE,
                      timestamp=123.5)
        j2 = Judgment(triplet_id="t0", annotator_id="u2", choice=Choice.A_SURE,
                      timestamp=124.5)
        append_judgment(path, j1)
        append_judgment(path, j2)
        assert read_judgments(path) == [j1, j2]

    def test_judgments_missing_file_empty(self, tmp_path):
        assert read_judgments(tmp_path / "none.jsonl") == []
