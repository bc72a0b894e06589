"""Landmark stabilization and facial ROI geometry.

Landmarks are smoothed with an exponential moving average to damp thermal
detector jitter; six axis-aligned ROI rectangles are then derived from the
smoothed bounding box and five facial points. ``percentile_stretch`` is the
8-bit normalization used to prepare raw frames for an external detector; it
takes no part in the numeric temperature path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import GEOMETRIC_ROIS, LandmarkFrame, LandmarkTrack, RoiKind

DEFAULT_EMA_ALPHA = 0.15
DEFAULT_CARRY_FORWARD_S = 2.0


@dataclass(frozen=True)
class RoiGeometry:
    """Rectangle proportions relative to the face bounding box (w, h) and
    the placement offsets that position them."""

    nose: tuple[float, float] = (0.30, 0.15)
    periorbital: tuple[float, float] = (0.24, 0.12)
    cheek: tuple[float, float] = (0.20, 0.20)
    forehead: tuple[float, float] = (0.45, 0.18)
    # inner-canthus proxy: eye center shifted this fraction of the
    # inter-eye distance toward the facial midline
    canthus_shift: float = 0.25
    # cheek center: eye-mouth midpoint shifted laterally (away from the
    # midline) by this fraction of the bbox width
    cheek_lateral: float = 0.10
    # forehead rect bottom sits this fraction of bbox height above the
    # inter-eye midpoint
    forehead_gap: float = 0.15


@dataclass(frozen=True)
class RoiRect:
    """Integer pixel rectangle for one geometric ROI, clipped to the frame.

    ``valid`` is False when clipping left less than one pixel in either
    dimension (ROI fully or effectively outside the frame).
    """

    roi: RoiKind
    x: int
    y: int
    w: int
    h: int
    valid: bool = True


def smooth_landmarks(track: LandmarkTrack, alpha: float = DEFAULT_EMA_ALPHA) -> LandmarkTrack:
    """EMA-smooth every landmark coordinate, the bbox and the confidence.

    The recurrence is seeded with the first observation, which passes
    through unchanged. Smoothing runs over successive entries (missing
    frames do not reset the state).
    """
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must be in (0, 1], got {alpha}")
    if len(track) == 0:
        raise InputError("cannot smooth an empty landmark track")

    smoothed: list[LandmarkFrame] = []
    state: np.ndarray | None = None
    for entry in track:
        vec = np.array(
            [entry.confidence, *entry.bbox, *(c for p in entry.points for c in p)],
            dtype=np.float64,
        )
        state = vec if state is None else alpha * vec + (1.0 - alpha) * state
        pts = tuple((state[5 + 2 * i], state[6 + 2 * i]) for i in range(5))
        smoothed.append(
            LandmarkFrame(
                frame_idx=entry.frame_idx,
                confidence=float(state[0]),
                bbox=(float(state[1]), float(state[2]), float(state[3]), float(state[4])),
                points=pts,
            )
        )
    return LandmarkTrack(tuple(smoothed))


def _round_half_away(v: float) -> int:
    # deterministic pixel grid rounding; ties go away from zero
    return int(np.sign(v) * np.floor(abs(v) + 0.5))


def _make_rect(
    roi: RoiKind,
    cx: float,
    cy: float,
    w: float,
    h: float,
    frame_w: int,
    frame_h: int,
    bottom: float | None = None,
) -> RoiRect:
    """Rasterize a rect given its center (or bottom edge) and float size."""
    x0 = cx - w / 2.0
    x1 = cx + w / 2.0
    if bottom is None:
        y0 = cy - h / 2.0
        y1 = cy + h / 2.0
    else:
        y1 = bottom
        y0 = bottom - h
    xi0, xi1 = _round_half_away(x0), _round_half_away(x1)
    yi0, yi1 = _round_half_away(y0), _round_half_away(y1)
    xi0c, xi1c = max(0, xi0), min(frame_w, xi1)
    yi0c, yi1c = max(0, yi0), min(frame_h, yi1)
    if xi1c - xi0c < 1 or yi1c - yi0c < 1:
        return RoiRect(roi, 0, 0, 0, 0, valid=False)
    return RoiRect(roi, xi0c, yi0c, xi1c - xi0c, yi1c - yi0c)


def derive_rois(
    landmarks: LandmarkFrame,
    frame_dims: tuple[int, int],
    geometry: RoiGeometry = RoiGeometry(),
) -> dict[RoiKind, RoiRect]:
    """Six ROI rectangles proportional to the face bounding box.

    ``frame_dims`` is (width, height). Rectangles are clipped to the frame;
    an ROI clipped to nothing comes back with ``valid=False`` rather than
    raising.
    """
    fw, fh = frame_dims
    bx, by, bw, bh = landmarks.bbox
    if bw <= 0 or bh <= 0:
        raise InputError(f"bbox must have positive area, got {landmarks.bbox}")
    eye_l, eye_r, nose, mouth_l, mouth_r = [np.asarray(p, dtype=np.float64)
                                            for p in landmarks.points]
    mid = (eye_l + eye_r) / 2.0
    g = geometry

    rects: dict[RoiKind, RoiRect] = {}
    rects[RoiKind.NOSE] = _make_rect(
        RoiKind.NOSE, nose[0], nose[1], g.nose[0] * bw, g.nose[1] * bh, fw, fh)

    canthus_l = eye_l + g.canthus_shift * (eye_r - eye_l)
    canthus_r = eye_r + g.canthus_shift * (eye_l - eye_r)
    for roi, c in ((RoiKind.EYE_L, canthus_l), (RoiKind.EYE_R, canthus_r)):
        rects[roi] = _make_rect(
            roi, c[0], c[1], g.periorbital[0] * bw, g.periorbital[1] * bh, fw, fh)

    for roi, eye, mouth in (
        (RoiKind.CHEEK_L, eye_l, mouth_l),
        (RoiKind.CHEEK_R, eye_r, mouth_r),
    ):
        c = (eye + mouth) / 2.0
        side = np.sign(eye[0] - mid[0])
        if side == 0:  # degenerate frontal tie: fall back to ROI identity
            side = -1.0 if roi == RoiKind.CHEEK_L else 1.0
        cx = c[0] + side * g.cheek_lateral * bw
        rects[roi] = _make_rect(roi, cx, c[1], g.cheek[0] * bw, g.cheek[1] * bh, fw, fh)

    rects[RoiKind.FOREHEAD] = _make_rect(
        RoiKind.FOREHEAD,
        mid[0],
        0.0,
        g.forehead[0] * bw,
        g.forehead[1] * bh,
        fw,
        fh,
        bottom=mid[1] - g.forehead_gap * bh,
    )
    return rects


def track_rois(
    track: LandmarkTrack,
    n_frames: int,
    fps: float,
    frame_dims: tuple[int, int],
    alpha: float = DEFAULT_EMA_ALPHA,
    carry_forward_s: float = DEFAULT_CARRY_FORWARD_S,
    geometry: RoiGeometry = RoiGeometry(),
) -> list[dict[RoiKind, RoiRect] | None]:
    """Per-frame ROI rectangles for a full frame sequence.

    Frames without a detection reuse the last smoothed geometry for up to
    ``carry_forward_s`` seconds, after which every ROI is invalid (entry is
    None) until the next detection.
    """
    smoothed = smooth_landmarks(track, alpha)
    by_frame = {e.frame_idx: e for e in smoothed}
    max_stale = int(round(carry_forward_s * fps))

    out: list[dict[RoiKind, RoiRect] | None] = []
    last_rects: dict[RoiKind, RoiRect] | None = None
    last_seen = -10 ** 9
    for i in range(n_frames):
        entry = by_frame.get(i)
        if entry is not None:
            last_rects = derive_rois(entry, frame_dims, geometry)
            last_seen = i
            out.append(last_rects)
        elif last_rects is not None and (i - last_seen) <= max_stale:
            out.append(last_rects)
        else:
            out.append(None)
    return out


def percentile_stretch(
    frame: np.ndarray, lo_pct: float = 2.0, hi_pct: float = 98.0
) -> np.ndarray:
    """Normalize a radiometric frame to 8 bits with a percentile stretch.

    Values at or below the low percentile map to 0, at or above the high
    percentile to 255, linear in between. A frame with no spread between
    the two percentiles maps values above the low percentile to 255 and
    everything else to 0 (so a constant frame is all zeros).
    """
    frame = np.asarray(frame)
    if frame.size == 0:
        raise InputError("cannot stretch an empty frame")
    f = frame.astype(np.float64)
    p_lo, p_hi = np.percentile(f, [lo_pct, hi_pct])
    if p_hi > p_lo:
        norm = np.clip((f - p_lo) / (p_hi - p_lo), 0.0, 1.0)
    else:
        norm = (f > p_lo).astype(np.float64)
    return np.rint(norm * 255.0).astype(np.uint8)
