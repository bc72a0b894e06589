"""Heart and breathing rate estimation from ROI traces.

The cardiac chain prefilters four ROI channels, removes the dominant shared
(motion) component with a QR-based orthogonal projection, bandpasses the
surviving residual to the cardiac band and tracks its spectral peak with a
sliding Welch estimator. The respiratory chain averages the nose and cheek
channels in the respiratory band and tracks the same way with a longer
window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.ndimage

from . import dsp
from .errors import InputError, TooFewSamplesError
from .model import (
    BR_VALID_BPM,
    HR_VALID_BPM,
    MAX_BRIDGE_GAP_S,
    BiosignalEstimate,
    RoiKind,
    RoiTrace,
    SignalKind,
    bridge_short_gaps,
)

log = logging.getLogger(__name__)

CARDIAC_PREFILTER_HZ = (0.3, 4.0)
CARDIAC_BAND_HZ = (1.0, 3.5)
RESP_PREFILTER_HZ = (0.12, 2.0)
RESP_BAND_HZ = (0.12, 0.55)
PREFILTER_ORDER = 4

# fixed priority for variance ties and for assembling the channel matrix
HR_CHANNEL_ORDER = (RoiKind.FOREHEAD, RoiKind.NOSE, RoiKind.CHEEK_L, RoiKind.CHEEK_R)
BR_CHANNEL_ORDER = (RoiKind.NOSE, RoiKind.CHEEK_L, RoiKind.CHEEK_R)


@dataclass(frozen=True)
class RateEstimatorConfig:
    """Sliding-window spectral rate tracker settings."""

    kind: SignalKind
    band_hz: tuple[float, float]       # spectral search band
    window_s: float                    # sliding analysis window
    step_s: float                      # hop between windows
    valid_bpm: tuple[float, float]     # post-hoc plausibility range
    prefilter_hz: tuple[float, float] | None = None  # per-channel bandpass
    prefilter_order: int = PREFILTER_ORDER
    gap_max: int = 10                  # longest invalid run bridged, in output samples
    median_len: int = 7                # median kernel on valid spans
    apply_median: bool = True
    # a window's peak must stand this far above the band's median power,
    # and at least this fraction of its samples must be valid
    min_peak_ratio: float = 8.0
    min_valid_frac: float = 0.5

    def __post_init__(self) -> None:
        lo, hi = self.band_hz
        if not 0.0 < lo < hi:
            raise InputError(f"search band must satisfy 0 < low < high, got {self.band_hz}")
        if self.prefilter_hz is not None and not 0.0 < self.prefilter_hz[0] < self.prefilter_hz[1]:
            raise InputError(f"invalid prefilter band {self.prefilter_hz}")
        if self.window_s <= 2.0 / lo:
            raise InputError(
                f"window of {self.window_s} s cannot resolve the band floor "
                f"{lo} Hz (needs > {2.0 / lo:.1f} s)")
        if self.step_s <= 0:
            raise InputError(f"step must be positive, got {self.step_s}")
        if not 0.0 < self.valid_bpm[0] < self.valid_bpm[1]:
            raise InputError(f"invalid bpm range {self.valid_bpm}")


CARDIAC_CONFIG = RateEstimatorConfig(
    kind=SignalKind.HEART_RATE,
    band_hz=CARDIAC_BAND_HZ,
    window_s=15.0,
    step_s=1.0,
    valid_bpm=HR_VALID_BPM,
    prefilter_hz=CARDIAC_PREFILTER_HZ,
)

# the median step is attached to the cardiac chain only
RESPIRATORY_CONFIG = RateEstimatorConfig(
    kind=SignalKind.BREATHING_RATE,
    band_hz=RESP_BAND_HZ,
    window_s=25.0,
    step_s=1.0,
    valid_bpm=BR_VALID_BPM,
    prefilter_hz=RESP_PREFILTER_HZ,
    apply_median=False,
    min_peak_ratio=3.0,
)


@dataclass(frozen=True)
class OmitResult:
    """Fused cardiac-band signal plus how it was obtained."""

    signal: np.ndarray
    fallback: bool              # True when rank deficiency forced a raw channel
    selected_channel: int       # index into the (variance-ordered) inputs
    peak_ratio: float           # band peak-to-median ratio of the selection


def omit_fuse(
    channels: list[np.ndarray],
    band_hz: tuple[float, float],
    fs: float,
    prefilter: bool = True,
) -> OmitResult:
    """Project out the dominant shared component across channels.

    Channels are (optionally) bandpass-prefiltered, ordered by descending
    variance (stable for ties, so callers pass them in the canonical ROI
    order) and standardized. The dominant time-course is the first
    orthonormal column of a QR factorization of the transposed channel
    matrix; every channel's projection onto it is removed and the residual
    with the strongest band peak-to-median power ratio wins. A
    rank-deficient matrix falls back to the best raw channel, flagged.
    """
    if len(channels) < 2:
        raise InputError(f"shared-component removal needs >= 2 channels, got {len(channels)}")
    n = len(channels[0])
    for i, c in enumerate(channels):
        if len(c) != n:
            raise InputError(
                f"channel {i} has {len(c)} samples; channel 0 has {n}")

    arrs = [np.asarray(c, dtype=np.float64) for c in channels]
    if prefilter:
        arrs = [dsp.bandpass(c, fs, CARDIAC_PREFILTER_HZ[0], CARDIAC_PREFILTER_HZ[1],
                             PREFILTER_ORDER) for c in arrs]

    variances = np.array([c.var() for c in arrs])
    live = [i for i in range(len(arrs)) if variances[i] > 0.0]
    if len(live) < 2:
        raise InputError("fewer than 2 channels carry any signal variance")
    order = sorted(live, key=lambda i: -variances[i])  # stable: ties keep input order
    x = np.stack([arrs[i] for i in order])
    x = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, keepdims=True)

    def best_by_peak(cands: np.ndarray) -> tuple[int, float]:
        ratios = [
            dsp.peak_to_median_ratio(dsp.welch_psd(c, fs), band_hz) for c in cands]
        k = int(np.argmax(ratios))
        return k, float(ratios[k])

    if np.linalg.matrix_rank(x.T) < 2:
        k, ratio = best_by_peak(x)
        log.warning("channel matrix is rank deficient; falling back to raw "
                    "channel %d (band peak ratio %.2f)", order[k], ratio)
        return OmitResult(signal=x[k].copy(), fallback=True,
                          selected_channel=k, peak_ratio=ratio)

    q, _ = np.linalg.qr(x.T)
    q0 = q[:, 0]
    residuals = x - np.outer(x @ q0, q0)
    k, ratio = best_by_peak(residuals)
    return OmitResult(signal=residuals[k].copy(), fallback=False,
                      selected_channel=k, peak_ratio=ratio)


def estimate_rate_track(
    x: np.ndarray,
    fs: float,
    cfg: RateEstimatorConfig,
    valid: np.ndarray | None = None,
) -> BiosignalEstimate:
    """Sliding-window spectral rate track, one estimate per step.

    Each window position gets a Welch PSD (half-window sub-segments, 50%
    overlap, Hann) and a parabolic peak refinement inside ``cfg.band_hz``;
    the rate is 60 times the peak frequency and the timestamp sits at the
    window center. A window is invalid when too few of its samples are
    valid or its peak fails the peak-to-median quality gate; range
    filtering happens later in :func:`postprocess_rates`.
    """
    x = np.asarray(x, dtype=np.float64)
    window = int(round(cfg.window_s * fs))
    step = int(round(cfg.step_s * fs))
    if len(x) < window:
        raise TooFewSamplesError(
            f"rate tracking needs at least one {cfg.window_s:.0f} s window "
            f"({window} samples), got {len(x)}",
            minimum=window,
            got=len(x),
        )
    if valid is None:
        valid = np.ones(len(x), dtype=bool)

    starts = range(0, len(x) - window + 1, step)
    bpm = np.zeros(len(starts), dtype=np.float64)
    ok = np.zeros(len(starts), dtype=bool)
    for j, s in enumerate(starts):
        seg = x[s: s + window]
        frac = float(valid[s: s + window].mean())
        spectrum = dsp.welch_psd(seg, fs, seg_len=window // 2)
        peak = dsp.parabolic_peak(spectrum, cfg.band_hz)
        ratio = dsp.peak_to_median_ratio(spectrum, cfg.band_hz)
        bpm[j] = 60.0 * peak.freq_hz
        ok[j] = frac >= cfg.min_valid_frac and ratio >= cfg.min_peak_ratio
    return BiosignalEstimate(
        kind=cfg.kind,
        rate_hz=1.0 / cfg.step_s,
        values=bpm,
        valid=ok,
        t0=cfg.window_s / 2.0,
    )


def _interp_short_gaps(values: np.ndarray, valid: np.ndarray, gap_max: int
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation across interior invalid runs of <= gap_max."""
    values = values.copy()
    valid = valid.copy()
    n = len(values)
    i = 0
    while i < n:
        if valid[i]:
            i += 1
            continue
        j = i
        while j < n and not valid[j]:
            j += 1
        run = j - i
        if 0 < i and j < n and run <= gap_max:
            left, right = values[i - 1], values[j]
            frac = np.arange(1, run + 1, dtype=np.float64) / (run + 1)
            values[i:j] = left + frac * (right - left)
            valid[i:j] = True
        i = j
    return values, valid


def postprocess_rates(raw: BiosignalEstimate, cfg: RateEstimatorConfig) -> BiosignalEstimate:
    """Range-filter, bridge short gaps, and (for cardiac) median-smooth.

    Samples outside ``cfg.valid_bpm`` are invalidated. Interior invalid
    runs of at most ``cfg.gap_max`` samples are linearly interpolated back
    to validity; longer runs stay invalid. When ``cfg.apply_median`` is
    set, each contiguous valid span is median-filtered with a
    ``cfg.median_len``-point kernel.
    """
    lo, hi = cfg.valid_bpm
    valid = raw.valid & (raw.values >= lo) & (raw.values <= hi)
    values, valid = _interp_short_gaps(raw.values, valid, cfg.gap_max)

    if cfg.apply_median and cfg.median_len > 1:
        k = cfg.median_len + (cfg.median_len % 2 == 0)  # forced odd
        i = 0
        n = len(values)
        while i < n:
            if not valid[i]:
                i += 1
                continue
            j = i
            while j < n and valid[j]:
                j += 1
            span = values[i:j]
            size = min(k, 2 * len(span) - 1)
            values[i:j] = scipy.ndimage.median_filter(span, size=size, mode="nearest")
            i = j
    return replace(raw, values=values, valid=valid)


def _prepare_channels(
    traces: dict[RoiKind, RoiTrace],
    wanted: tuple[RoiKind, ...],
    required: tuple[RoiKind, ...],
) -> tuple[list[np.ndarray], np.ndarray, float]:
    """Bridge gaps, order channels canonically, AND their validity masks."""
    missing_req = [r for r in required if r not in traces]
    if missing_req:
        raise InputError(
            f"required ROI traces missing: {[r.value for r in missing_req]}")
    present = [r for r in wanted if r in traces]
    if len(present) < len(wanted):
        gone = [r.value for r in wanted if r not in traces]
        log.warning("proceeding without ROI channels %s", gone)

    fs = traces[present[0]].fps
    n = len(traces[present[0]])
    channels: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for roi in present:
        tr = traces[roi]
        if tr.fps != fs or len(tr) != n:
            raise InputError(
                f"trace {roi.value} has fps {tr.fps} and {len(tr)} samples; "
                f"expected fps {fs} and {n} samples")
        vals, valid = bridge_short_gaps(tr.values, tr.valid, fs, MAX_BRIDGE_GAP_S)
        channels.append(vals)
        masks.append(valid)
    return channels, np.logical_and.reduce(masks), fs


def estimate_hr(
    traces: dict[RoiKind, RoiTrace],
    cfg: RateEstimatorConfig = CARDIAC_CONFIG,
) -> BiosignalEstimate:
    """Heart rate track from the forehead, nose and cheek traces.

    Chain: 0.3-4.0 Hz prefilter per channel, shared-component removal,
    1.0-3.5 Hz bandpass, sliding 15 s Welch peak track, then range
    filtering (60-180 bpm), gap bridging and a 7-point median.
    """
    channels, valid, fs = _prepare_channels(
        traces, HR_CHANNEL_ORDER, required=())
    if len(channels) < 2:
        raise InputError(
            f"heart rate estimation needs >= 2 ROI channels, got {len(channels)}")
    min_valid = int(round(30.0 * fs))
    if int(valid.sum()) < min_valid:
        raise TooFewSamplesError(
            f"heart rate estimation needs at least 30 s of jointly valid "
            f"samples ({min_valid}), got {int(valid.sum())}",
            minimum=min_valid,
            got=int(valid.sum()),
        )
    if cfg.prefilter_hz is not None:
        channels = [dsp.bandpass(c, fs, *cfg.prefilter_hz, cfg.prefilter_order)
                    for c in channels]
    fused = omit_fuse(channels, cfg.band_hz, fs, prefilter=False)
    if fused.fallback:
        log.warning("shared-component removal degraded to a raw channel")
    cardiac = dsp.bandpass(fused.signal, fs, *cfg.band_hz, cfg.prefilter_order)
    raw = estimate_rate_track(cardiac, fs, cfg, valid=valid)
    return postprocess_rates(raw, cfg)


def estimate_br(
    traces: dict[RoiKind, RoiTrace],
    cfg: RateEstimatorConfig = RESPIRATORY_CONFIG,
) -> BiosignalEstimate:
    """Breathing rate track from the nose plus any available cheek traces.

    Each channel is bandpassed to 0.12-2.0 Hz and the channels are averaged
    per sample; the average goes through a sliding 25 s Welch peak track
    with a 0.12-0.55 Hz search band and 7-45 bpm range filtering (no median
    by default).
    """
    channels, valid, fs = _prepare_channels(
        traces, BR_CHANNEL_ORDER, required=(RoiKind.NOSE,))
    if cfg.prefilter_hz is not None:
        channels = [dsp.bandpass(c, fs, *cfg.prefilter_hz, cfg.prefilter_order)
                    for c in channels]
    combined = np.mean(channels, axis=0)
    raw = estimate_rate_track(combined, fs, cfg, valid=valid)
    return postprocess_rates(raw, cfg)
