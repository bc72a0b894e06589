"""Spatial aggregation of ROI pixel patches into scalar time series."""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import InputError
from .model import DERIVED_MEMBERS, RoiKind, RoiTrace, ThermalFrameSequence
from .roi import RoiRect


class AggregationKind(str, enum.Enum):
    """How the pixels inside an ROI rectangle collapse to one value."""

    MEAN = "mean"
    GAUSSIAN = "gaussian"            # center-weighted, sigma = 0.35 * half-width
    TRIMMED_MEAN = "trimmed_mean"    # drop 10% of pixels from each tail
    HOTTEST_FRACTION = "hottest_fraction"  # mean of the hottest 30%


GAUSSIAN_SIGMA_FRAC = 0.35
TRIM_FRAC = 0.10
HOTTEST_FRAC = 0.30

# Center weighting suits compact vascular targets; the periorbital rects
# straddle skin and eye so a trimmed mean is the safer default there.
DEFAULT_AGGREGATION: dict[RoiKind, AggregationKind] = {
    RoiKind.NOSE: AggregationKind.GAUSSIAN,
    RoiKind.EYE_L: AggregationKind.TRIMMED_MEAN,
    RoiKind.EYE_R: AggregationKind.TRIMMED_MEAN,
    RoiKind.CHEEK_L: AggregationKind.GAUSSIAN,
    RoiKind.CHEEK_R: AggregationKind.GAUSSIAN,
    RoiKind.FOREHEAD: AggregationKind.GAUSSIAN,
    RoiKind.CHEEKS: AggregationKind.GAUSSIAN,
    RoiKind.EYES: AggregationKind.TRIMMED_MEAN,
}


def default_aggregation(roi: RoiKind) -> AggregationKind:
    return DEFAULT_AGGREGATION[roi]


def gaussian_weights(h: int, w: int, sigma_frac: float = GAUSSIAN_SIGMA_FRAC) -> np.ndarray:
    """Separable Gaussian over pixel centers, sigma = sigma_frac * half-extent
    per axis. Normalized to sum to 1."""
    if h < 1 or w < 1:
        raise InputError(f"weight grid needs positive dims, got {h}x{w}")
    # pixel-center offsets from the patch center, in pixels
    ys = np.arange(h, dtype=np.float64) - (h - 1) / 2.0
    xs = np.arange(w, dtype=np.float64) - (w - 1) / 2.0
    sy = max(sigma_frac * (h / 2.0), 1e-12)
    sx = max(sigma_frac * (w / 2.0), 1e-12)
    wy = np.exp(-0.5 * (ys / sy) ** 2)
    wx = np.exp(-0.5 * (xs / sx) ** 2)
    grid = np.outer(wy, wx)
    return grid / grid.sum()


def aggregate_patch(patch: np.ndarray, kind: AggregationKind) -> float:
    """Collapse one ROI patch to a scalar.

    Parameters
    ----------
    patch : ndarray
        2-d array of pixel values (any real dtype).
    kind : AggregationKind
        Aggregator to apply.

    Returns
    -------
    float
        The aggregated value.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.size == 0:
        raise InputError(f"patch must be a non-empty 2-d array, got shape {patch.shape}")

    if kind == AggregationKind.MEAN:
        return float(patch.mean())
    if kind == AggregationKind.GAUSSIAN:
        w = gaussian_weights(*patch.shape)
        return float((patch * w).sum())
    if kind == AggregationKind.TRIMMED_MEAN:
        flat = np.sort(patch.ravel())
        k = math.floor(TRIM_FRAC * flat.size)
        kept = flat[k: flat.size - k]
        if kept.size == 0:  # tiny patch with trimming eating everything
            kept = flat
        return float(kept.mean())
    if kind == AggregationKind.HOTTEST_FRACTION:
        flat = np.sort(patch.ravel())
        k = math.ceil(HOTTEST_FRAC * flat.size)
        return float(flat[flat.size - k:].mean())
    raise InputError(f"unknown aggregation kind: {kind!r}")


def combine_derived(traces: dict[RoiKind, RoiTrace]) -> dict[RoiKind, RoiTrace]:
    """Return a copy with any missing derived traces (``cheeks``, ``eyes``)
    built as the per-sample mean of their members, valid where both are."""
    out = dict(traces)
    for derived, (a, b) in DERIVED_MEMBERS.items():
        if derived in out or a not in out or b not in out:
            continue
        ta, tb = out[a], out[b]
        if len(ta) != len(tb) or ta.fps != tb.fps:
            raise InputError(
                f"cannot combine {a.value}/{b.value}: unequal length or rate")
        both = ta.valid & tb.valid
        out[derived] = RoiTrace(
            roi=derived,
            aggregation=ta.aggregation,
            fps=ta.fps,
            values=np.where(both, (ta.values + tb.values) / 2.0, 0.0),
            valid=both,
        )
    return out


def _closure(rois: tuple[RoiKind, ...]) -> tuple[RoiKind, ...]:
    """Expand derived ROIs into the geometric ROIs they require."""
    needed: list[RoiKind] = []
    for roi in rois:
        members = DERIVED_MEMBERS.get(roi, (roi,))
        for m in members:
            if m not in needed:
                needed.append(m)
    return tuple(needed)


def extract_traces(
    frames: ThermalFrameSequence,
    rects: list[dict[RoiKind, RoiRect] | None],
    rois: tuple[RoiKind, ...],
    aggregation: dict[RoiKind, AggregationKind] | None = None,
) -> dict[RoiKind, RoiTrace]:
    """Aggregate a frame sequence into one trace per requested ROI.

    Derived ROIs (``cheeks``, ``eyes``) are the arithmetic mean of their
    member traces and are valid only on frames where both members are. A
    frame with no rectangle set, or an invalid rectangle, yields an invalid
    sample (value 0).
    """
    if len(rects) != len(frames):
        raise InputError(
            f"rect list length {len(rects)} does not match frame count {len(frames)}")
    agg = dict(DEFAULT_AGGREGATION)
    if aggregation:
        agg.update(aggregation)

    geo = _closure(rois)
    n = len(frames)
    values = {roi: np.zeros(n, dtype=np.float64) for roi in geo}
    valid = {roi: np.zeros(n, dtype=bool) for roi in geo}

    for i in range(n):
        per_frame = rects[i]
        if per_frame is None:
            continue
        frame = frames.frames[i]
        for roi in geo:
            rect = per_frame.get(roi)
            if rect is None or not rect.valid:
                continue
            patch = frame[rect.y: rect.y + rect.h, rect.x: rect.x + rect.w]
            values[roi][i] = aggregate_patch(patch, agg[roi])
            valid[roi][i] = True

    out: dict[RoiKind, RoiTrace] = {}
    for roi in rois:
        if roi in DERIVED_MEMBERS:
            a, b = DERIVED_MEMBERS[roi]
            both = valid[a] & valid[b]
            merged = np.where(both, (values[a] + values[b]) / 2.0, 0.0)
            out[roi] = RoiTrace(
                roi=roi,
                aggregation=agg[roi].value,
                fps=frames.fps,
                values=merged,
                valid=both,
            )
        else:
            out[roi] = RoiTrace(
                roi=roi,
                aggregation=agg[roi].value,
                fps=frames.fps,
                values=values[roi],
                valid=valid[roi],
            )
    return out
