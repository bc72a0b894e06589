"""Landmark smoothing and ROI geometry.

The rectangle tests pin hand-computed pixel values for a fixed face so
any change to the proportional geometry or the rounding rule shows up
as an exact mismatch.
"""

from __future__ import annotations

import numpy as np
import pytest

from thermovitals.errors import InputError
from thermovitals.model import LandmarkFrame, LandmarkTrack, RoiKind
from thermovitals.roi import (
    DEFAULT_CARRY_FORWARD_S,
    DEFAULT_EMA_ALPHA,
    RoiGeometry,
    derive_rois,
    percentile_stretch,
    smooth_landmarks,
    track_rois,
)

FRAME_DIMS = (200, 200)


def _face(idx: int = 0, conf: float = 1.0, shift: float = 0.0) -> LandmarkFrame:
    return LandmarkFrame(
        frame_idx=idx,
        confidence=conf,
        bbox=(20.0 + shift, 10.0, 100.0, 120.0),
        points=(
            (40.0 + shift, 50.0),   # eye_l
            (80.0 + shift, 50.0),   # eye_r
            (60.0 + shift, 75.0),   # nose
            (45.0 + shift, 100.0),  # mouth_l
            (75.0 + shift, 100.0),  # mouth_r
        ),
    )


class TestSmoothLandmarks:
    def test_first_observation_passes_through(self):
        track = LandmarkTrack(entries=(_face(0),))
        out = smooth_landmarks(track, alpha=0.15)
        assert out.entries[0] == _face(0)

    def test_recurrence_on_second_observation(self):
        a = 0.15
        track = LandmarkTrack(entries=(_face(0), _face(1, shift=10.0)))
        out = smooth_landmarks(track, alpha=a)
        second = out.entries[1]
        # state = a * new + (1 - a) * old, applied to every coordinate
        assert second.bbox[0] == pytest.approx(a * 30.0 + (1 - a) * 20.0)
        assert second.points[0][0] == pytest.approx(a * 50.0 + (1 - a) * 40.0)
        assert second.points[0][1] == pytest.approx(50.0)

    def test_confidence_smoothed_too(self):
        track = LandmarkTrack(entries=(_face(0, conf=1.0), _face(1, conf=0.0)))
        out = smooth_landmarks(track, alpha=0.5)
        assert out.entries[1].confidence == pytest.approx(0.5)

    def test_alpha_one_is_identity(self):
        track = LandmarkTrack(entries=(_face(0), _face(1, shift=7.0)))
        out = smooth_landmarks(track, alpha=1.0)
        assert out.entries[1].bbox == _face(1, shift=7.0).bbox

    def test_alpha_out_of_range(self):
        track = LandmarkTrack(entries=(_face(0),))
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(InputError):
                smooth_landmarks(track, alpha=bad)

    def test_empty_track_rejected(self):
        with pytest.raises(InputError):
            smooth_landmarks(LandmarkTrack(entries=()), alpha=0.15)

    def test_converges_to_steady_input(self):
        entries = [_face(0)] + [_face(i, shift=20.0) for i in range(1, 80)]
        out = smooth_landmarks(LandmarkTrack(entries=tuple(entries)),
                               alpha=DEFAULT_EMA_ALPHA)
        assert out.entries[-1].bbox[0] == pytest.approx(40.0, abs=1e-4)


class TestDeriveRois:
    """Hand-checked rectangles for the fixed face in ``_face``.

    bbox w=100, h=120; eyes at (40,50)/(80,50); nose (60,75);
    mouth corners (45,100)/(75,100); mid-eye (60,50).
    """

    @pytest.fixture()
    def rects(self):
        return derive_rois(_face(), FRAME_DIMS)

    def test_nose(self, rects):
        r = rects[RoiKind.NOSE]
        # 0.30*100 x 0.15*120 centred on the nose tip
        assert (r.x, r.y, r.w, r.h) == (45, 66, 30, 18)
        assert r.valid

    def test_periorbital_left(self, rects):
        r = rects[RoiKind.EYE_L]
        # canthus proxy: eye_l + 0.25*(eye_r - eye_l) = (50, 50)
        assert (r.x, r.y, r.w, r.h) == (38, 43, 24, 14)

    def test_periorbital_right(self, rects):
        r = rects[RoiKind.EYE_R]
        # canthus proxy: eye_r + 0.25*(eye_l - eye_r) = (70, 50)
        assert (r.x, r.y, r.w, r.h) == (58, 43, 24, 14)

    def test_cheek_left(self, rects):
        r = rects[RoiKind.CHEEK_L]
        # centre: midpoint of eye_l and mouth_l = (42.5, 75), pushed
        # 0.10*100 px away from the face midline (eye_l left of mid)
        assert (r.x, r.y, r.w, r.h) == (23, 63, 20, 24)

    def test_cheek_right(self, rects):
        r = rects[RoiKind.CHEEK_R]
        assert (r.x, r.y, r.w, r.h) == (78, 63, 20, 24)

    def test_forehead(self, rects):
        r = rects[RoiKind.FOREHEAD]
        # bottom edge 0.15*120 above the mid-eye line, 0.45*100 wide
        assert (r.x, r.y, r.w, r.h) == (38, 10, 45, 22)
        assert r.y + r.h == 32

    def test_only_geometric_rois_produced(self, rects):
        assert set(rects) == {
            RoiKind.NOSE, RoiKind.EYE_L, RoiKind.EYE_R,
            RoiKind.CHEEK_L, RoiKind.CHEEK_R, RoiKind.FOREHEAD,
        }

    def test_rects_clipped_to_frame(self):
        lm = LandmarkFrame(
            frame_idx=0, confidence=1.0, bbox=(-30.0, 10.0, 100.0, 120.0),
            points=((-10.0, 50.0), (30.0, 50.0), (10.0, 75.0),
                    (-5.0, 100.0), (25.0, 100.0)))
        rects = derive_rois(lm, FRAME_DIMS)
        for r in rects.values():
            if r.valid:
                assert r.x >= 0 and r.y >= 0
                assert r.x + r.w <= FRAME_DIMS[0]
                assert r.y + r.h <= FRAME_DIMS[1]

    def test_offscreen_roi_marked_invalid(self):
        # face far off the left edge: cheek_l lands outside entirely
        lm = LandmarkFrame(
            frame_idx=0, confidence=1.0, bbox=(-90.0, 10.0, 100.0, 120.0),
            points=((-70.0, 50.0), (-30.0, 50.0), (-50.0, 75.0),
                    (-65.0, 100.0), (-35.0, 100.0)))
        rects = derive_rois(lm, FRAME_DIMS)
        r = rects[RoiKind.CHEEK_L]
        assert not r.valid
        assert (r.w, r.h) == (0, 0)

    def test_geometry_scales_with_bbox(self):
        small = derive_rois(_face(), FRAME_DIMS)
        lm = LandmarkFrame(
            frame_idx=0, confidence=1.0, bbox=(20.0, 10.0, 50.0, 60.0),
            points=_face().points)
        halved = derive_rois(lm, FRAME_DIMS)
        for roi, r in halved.items():
            assert r.w == pytest.approx(small[roi].w / 2, abs=1)
            assert r.h == pytest.approx(small[roi].h / 2, abs=1)

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(InputError):
            lm = LandmarkFrame(frame_idx=0, confidence=1.0,
                               bbox=(0.0, 0.0, 100.0, 120.0),
                               points=_face().points)
            object.__setattr__(lm, "bbox", (0.0, 0.0, 0.0, 120.0))
            derive_rois(lm, FRAME_DIMS)


class TestTrackRois:
    def _track(self, idxs):
        return LandmarkTrack(entries=tuple(_face(i) for i in idxs))

    def test_detected_frames_get_fresh_rects(self):
        n = 5
        out = track_rois(self._track(range(n)), n_frames=n, fps=5.0,
                         frame_dims=FRAME_DIMS)
        assert len(out) == n
        assert all(r is not None for r in out)

    def test_carry_forward_within_budget(self):
        # detections at 0 and 12; fps 5 and 2 s budget -> 10 stale frames ok
        out = track_rois(self._track([0, 12]), n_frames=13, fps=5.0,
                         frame_dims=FRAME_DIMS)
        for i in range(1, 11):
            assert out[i] is not None
            assert out[i] == out[0]
        assert out[11] is None  # 11 frames past the last detection
        assert out[12] is not None

    def test_no_leading_rects_before_first_detection(self):
        out = track_rois(self._track([3, 4]), n_frames=5, fps=5.0,
                         frame_dims=FRAME_DIMS)
        assert out[0] is None and out[2] is None
        assert out[3] is not None

    def test_budget_scales_with_fps(self):
        out = track_rois(self._track([0]), n_frames=70, fps=30.0,
                         frame_dims=FRAME_DIMS,
                         carry_forward_s=DEFAULT_CARRY_FORWARD_S)
        # round(2.0 * 30) = 60 stale frames allowed
        assert out[60] is not None
        assert out[61] is None


class TestPercentileStretch:
    def test_ramp_spans_full_range(self):
        frame = np.linspace(1000, 2000, 10000, dtype=np.uint16).reshape(100, 100)
        out = percentile_stretch(frame)
        assert out.dtype == np.uint8
        assert out.min() == 0 and out.max() == 255

    def test_monotone(self):
        rng = np.random.default_rng(3)
        frame = rng.integers(0, 60000, size=(50, 50)).astype(np.uint16)
        out = percentile_stretch(frame)
        flat_in = frame.ravel().astype(np.int64)
        flat_out = out.ravel().astype(np.int64)
        order = np.argsort(flat_in, kind="stable")
        assert (np.diff(flat_out[order]) >= 0).all()

    def test_constant_frame_maps_to_zero(self):
        frame = np.full((8, 8), 1234, dtype=np.uint16)
        out = percentile_stretch(frame)
        assert (out == 0).all()

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            percentile_stretch(np.zeros((0, 0), dtype=np.uint16))
