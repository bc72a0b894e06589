"""Shared data model: frame stacks, landmark tracks, ROI traces and estimates.

All values are immutable after construction and safe to share across
threads/processes. Temperature traces stay in raw radiometric counts
(arbitrary units); nothing here converts to degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InputError, NonFiniteError, TooFewSamplesError

#: gaps of at most this many seconds may be bridged by interpolation;
#: anything longer stays invalid through every processing stage.
MAX_BRIDGE_GAP_S = 2.0


class RoiKind(str, Enum):
    """Facial regions. The first six are geometric; the last two are
    trace-level averages of their paired members and are never produced
    by ROI geometry."""

    NOSE = "nose"
    EYE_L = "eye_l"
    EYE_R = "eye_r"
    CHEEK_L = "cheek_l"
    CHEEK_R = "cheek_r"
    FOREHEAD = "forehead"
    CHEEKS = "cheeks"  # derived: mean of cheek_l / cheek_r
    EYES = "eyes"      # derived: mean of eye_l / eye_r

    @property
    def is_derived(self) -> bool:
        return self in (RoiKind.CHEEKS, RoiKind.EYES)


GEOMETRIC_ROIS = (
    RoiKind.NOSE,
    RoiKind.EYE_L,
    RoiKind.EYE_R,
    RoiKind.CHEEK_L,
    RoiKind.CHEEK_R,
    RoiKind.FOREHEAD,
)

DERIVED_MEMBERS = {
    RoiKind.CHEEKS: (RoiKind.CHEEK_L, RoiKind.CHEEK_R),
    RoiKind.EYES: (RoiKind.EYE_L, RoiKind.EYE_R),
}


class SignalKind(str, Enum):
    EDA_TREND = "eda_trend"
    HEART_RATE = "heart_rate"
    BREATHING_RATE = "breathing_rate"


class Condition(str, Enum):
    PD = "PD"
    ND = "ND"
    CD = "CD"
    ED = "ED"
    OTHER = "Other"


class Sex(str, Enum):
    F = "F"
    M = "M"
    UNKNOWN = "Unknown"


class AgeGroup(str, Enum):
    YOUNG = "Young"
    OLDER = "Older"
    UNKNOWN = "Unknown"


#: valid physiological ranges in bpm, enforced by rate post-processing
HR_VALID_BPM = (60.0, 180.0)
BR_VALID_BPM = (7.0, 45.0)


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _as_bool_array(valid, n: int, name: str) -> np.ndarray:
    if valid is None:
        return np.ones(n, dtype=bool)
    arr = np.asarray(valid, dtype=bool)
    if arr.shape != (n,):
        raise InputError(f"{name} mask length {arr.shape} does not match {n} samples")
    return arr


@dataclass(frozen=True)
class ThermalFrameSequence:
    """Ordered stack of 2D radiometric frames (16-bit counts) plus timing."""

    frames: np.ndarray  # (n, height, width) uint16
    fps: float
    timestamps: np.ndarray | None = None  # seconds, strictly increasing

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3:
            raise InputError(f"frames must be (n, h, w), got shape {frames.shape}")
        if frames.dtype != np.uint16:
            raise InputError(f"16-bit frames required, got dtype {frames.dtype}")
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.float64)
            if len(ts) != len(frames):
                raise InputError(
                    f"timestamps length {len(ts)} != frame count {len(frames)}")
            if len(ts) > 1 and not np.all(np.diff(ts) > 0):
                raise InputError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def frame_times(self) -> np.ndarray:
        """Timestamps, or a uniform grid at the nominal fps when absent."""
        if self.timestamps is not None:
            return self.timestamps
        return np.arange(self.n_frames, dtype=np.float64) / self.fps


@dataclass(frozen=True)
class LandmarkFrame:
    """One face detection: bounding box plus five facial points."""

    frame_idx: int
    confidence: float
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels
    # (x, y) pairs: left eye, right eye, nose tip, left mouth, right mouth
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.points) != 5:
            raise InputError(f"expected 5 landmark points, got {len(self.points)}")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise InputError(f"bbox must have positive size, got {self.bbox}")


@dataclass(frozen=True)
class LandmarkTrack:
    """Per-frame detections, at most one entry per frame, frame_idx ascending."""

    entries: tuple[LandmarkFrame, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        idx = [e.frame_idx for e in entries]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InputError("landmark entries must have strictly increasing frame_idx")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class RoiTrace:
    """Scalar temperature per frame for one ROI, with a validity mask."""

    roi: RoiKind
    aggregation: str
    fps: float
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = _as_float_array(self.values, "values")
        valid = _as_bool_array(self.valid, len(values), "valid")
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration_s(self) -> float:
        return len(self.values) / self.fps


@dataclass(frozen=True)
class BiosignalEstimate:
    """A typed 1 Hz output series (EDA trend a.u.; HR/BR in bpm)."""

    kind: SignalKind
    rate_hz: float
    values: np.ndarray
    valid: np.ndarray
    t0: float = 0.0  # seconds offset of the first sample

    def __post_init__(self):
        values = _as_float_array(self.values, "values")
        valid = _as_bool_array(self.valid, len(values), "valid")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.values)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.values)) / self.rate_hz

    def in_valid_range(self) -> bool:
        """True when every valid sample falls in the physiological range
        for its kind (vacuously true for EDA trends, which carry no unit)."""
        if self.kind == SignalKind.HEART_RATE:
            lo, hi = HR_VALID_BPM
        elif self.kind == SignalKind.BREATHING_RATE:
            lo, hi = BR_VALID_BPM
        else:
            return True
        v = self.values[self.valid]
        return bool(np.all((v >= lo) & (v <= hi))) if v.size else True


@dataclass(frozen=True)
class SessionMeta:
    session_id: str
    subject_id: str = ""
    condition: Condition = Condition.OTHER
    condition_label: str = ""  # free text when condition == OTHER
    sex: Sex = Sex.UNKNOWN
    age_group: AgeGroup = AgeGroup.UNKNOWN


def check_finite(x: np.ndarray, name: str = "input") -> None:
    """Raise NonFiniteError identifying the first offending index."""
    bad = ~np.isfinite(x)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteError(f"{name} contains a non-finite value at index {i}", index=i)


def bridge_short_gaps(
    values: np.ndarray,
    valid: np.ndarray,
    fps: float,
    max_gap_s: float = MAX_BRIDGE_GAP_S,
) -> tuple[np.ndarray, np.ndarray]:
    """Fill every invalid sample by interpolation/extension so filters see
    finite data, but re-validate only interior gaps of at most ``max_gap_s``.

    Returns ``(filled_values, new_valid)``. Leading/trailing invalid runs are
    held at the nearest valid value and stay invalid.
    """
    valid = np.asarray(valid, dtype=bool)
    values = np.asarray(values, dtype=np.float64)
    if not valid.any():
        raise InputError("trace has no valid samples")
    if valid.all():
        return values.copy(), valid.copy()

    idx = np.arange(len(values))
    filled = values.copy()
    filled[~valid] = np.interp(idx[~valid], idx[valid], values[valid])

    new_valid = valid.copy()
    max_len = int(round(max_gap_s * fps))
    # scan interior invalid runs; re-validate the short ones
    i = 0
    n = len(values)
    while i < n:
        if not valid[i]:
            j = i
            while j < n and not valid[j]:
                j += 1
            interior = i > 0 and j < n
            if interior and (j - i) <= max_len:
                new_valid[i:j] = True
            i = j
        else:
            i += 1
    return filled, new_valid


def resample_to_timeline(
    values: np.ndarray,
    rate_hz: float,
    target_rate_hz: float,
    method: str = "cubic_spline",
    valid: np.ndarray | None = None,
    max_gap_s: float = MAX_BRIDGE_GAP_S,
) -> tuple[np.ndarray, np.ndarray]:
    """Resample a uniformly sampled series to ``target_rate_hz``.

    Parameters
    ----------
    values, rate_hz : the input series and its sample rate.
    target_rate_hz : output rate; the output covers the same time span.
    method : 'cubic_spline' (natural boundary), 'linear', or 'hold'.
    valid : optional validity mask. Invalid gaps wider than ``max_gap_s``
        stay invalid in the output; shorter gaps are bridged.

    Returns
    -------
    (values, valid) at the target rate.
    """
    values = _as_float_array(values, "series")
    n = len(values)
    valid = _as_bool_array(valid, n, "valid")
    if target_rate_hz <= 0:
        raise InputError(f"target_rate must be positive, got {target_rate_hz}")
    if method not in ("cubic_spline", "linear", "hold"):
        raise InputError(f"unknown resampling method {method!r}")

    t_in = np.arange(n, dtype=np.float64) / rate_hz
    tv = t_in[valid]
    xv = values[valid]
    check_finite(xv, "series")

    min_needed = 4 if method == "cubic_spline" else 2
    if len(xv) < min_needed:
        raise TooFewSamplesError(
            f"too few samples: {method} needs at least {min_needed} valid samples, "
            f"got {len(xv)}",
            minimum=min_needed,
            got=len(xv),
        )

    span = t_in[-1]
    n_out = int(np.floor(span * target_rate_hz + 1e-9)) + 1
    t_out = np.arange(n_out, dtype=np.float64) / target_rate_hz

    if method == "cubic_spline":
        out = CubicSpline(tv, xv, bc_type="natural")(t_out)
    elif method == "linear":
        out = np.interp(t_out, tv, xv)
    else:  # hold: previous valid sample
        pos = np.searchsorted(tv, t_out + 1e-12, side="right") - 1
        pos = np.clip(pos, 0, len(xv) - 1)
        out = xv[pos]

    out_valid = np.ones(n_out, dtype=bool)
    # outside the valid data span
    out_valid &= (t_out >= tv[0] - 1e-12) & (t_out <= tv[-1] + 1e-12)
    # inside gaps wider than max_gap_s between consecutive valid samples
    gaps = np.diff(tv)
    for g in np.nonzero(gaps > max_gap_s)[0]:
        out_valid &= ~((t_out > tv[g] + 1e-12) & (t_out < tv[g + 1] - 1e-12))
    return out, out_valid
