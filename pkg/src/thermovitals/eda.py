"""Sudomotor (EDA-like) trend extraction.

Eight interchangeable smoothers turn a 30 Hz ROI temperature trace into a
1 Hz slow trend (<0.1 Hz). Seven are linear; the Hilbert route demodulates
the 0.05-3 Hz band and rides the envelope on the trace's mean level so a
constant input stays a constant output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import dsp
from .errors import InputError, TooFewSamplesError
from .model import (
    MAX_BRIDGE_GAP_S,
    BiosignalEstimate,
    RoiTrace,
    SignalKind,
    bridge_short_gaps,
)

TREND_CUTOFF_HZ = 0.05
TREND_ORDER = 3
WINDOW_S = 30.0
MEDIAN_S = 5.0
HILBERT_BAND_HZ = (0.05, 3.0)
HILBERT_BP_ORDER = 4
OUTPUT_RATE_HZ = 1.0
MIN_VALID_S = 60.0


@dataclass(frozen=True)
class EdaParams:
    """Shared knobs of the trend extractors; defaults are the reference settings."""

    trend_cutoff_hz: float = TREND_CUTOFF_HZ
    trend_order: int = TREND_ORDER
    window_s: float = WINDOW_S
    median_s: float = MEDIAN_S
    hilbert_band_hz: tuple[float, float] = HILBERT_BAND_HZ
    hilbert_order: int = HILBERT_BP_ORDER
    output_rate_hz: float = OUTPUT_RATE_HZ
    min_valid_s: float = MIN_VALID_S

    def __post_init__(self) -> None:
        if self.trend_cutoff_hz <= 0 or self.window_s <= 0:
            raise InputError("trend cutoff and window must be positive")
        if not 0.0 < self.hilbert_band_hz[0] < self.hilbert_band_hz[1]:
            raise InputError(f"invalid demodulation band {self.hilbert_band_hz}")
        if self.output_rate_hz <= 0 or self.min_valid_s <= 0:
            raise InputError("output rate and validity floor must be positive")


DEFAULT_PARAMS = EdaParams()


class EdaMethod(str, enum.Enum):
    """The eight trend extraction methods, in their canonical order."""

    BUTTERWORTH_LP = "ButterworthLp"
    BESSEL_LP = "BesselLp"
    SAVGOL = "SavGol"
    MOVING_AVG = "MovingAvg"
    EXP_MOVING_AVG = "ExpMovingAvg"
    MEDIAN_SAVGOL = "MedianSavGol"
    HILBERT_ENV = "HilbertEnv"
    WAVELET_APPROX = "WaveletApprox"

    @property
    def params(self) -> dict[str, Any]:
        """The method's fixed parameter set, for provenance records."""
        return dict(_METHOD_PARAMS[self])


_METHOD_PARAMS: dict[EdaMethod, dict[str, Any]] = {
    EdaMethod.BUTTERWORTH_LP: {"cutoff_hz": TREND_CUTOFF_HZ, "order": TREND_ORDER,
                               "zero_phase": True},
    EdaMethod.BESSEL_LP: {"cutoff_hz": TREND_CUTOFF_HZ, "order": TREND_ORDER,
                          "zero_phase": True},
    EdaMethod.SAVGOL: {"window_s": WINDOW_S, "poly_order": TREND_ORDER},
    EdaMethod.MOVING_AVG: {"window_s": WINDOW_S, "centered": True},
    EdaMethod.EXP_MOVING_AVG: {"window_s": WINDOW_S, "alpha": "2/(N+1)"},
    EdaMethod.MEDIAN_SAVGOL: {"median_s": MEDIAN_S, "window_s": WINDOW_S,
                              "poly_order": TREND_ORDER},
    EdaMethod.HILBERT_ENV: {"band_hz": HILBERT_BAND_HZ, "bp_order": HILBERT_BP_ORDER,
                            "lowpass_hz": TREND_CUTOFF_HZ, "lowpass_order": TREND_ORDER},
    EdaMethod.WAVELET_APPROX: {"wavelet": "db4", "target_band_hz": TREND_CUTOFF_HZ},
}


def enumerate_methods() -> list[EdaMethod]:
    """All eight methods in canonical order."""
    return list(EdaMethod)


def apply_eda_method(x: np.ndarray, fs: float, method: EdaMethod,
                     params: EdaParams = DEFAULT_PARAMS) -> np.ndarray:
    """Run one smoothing method over a gap-free 30 Hz sample array."""
    x = np.asarray(x, dtype=np.float64)
    p = params
    if method == EdaMethod.BUTTERWORTH_LP:
        return dsp.lowpass(x, fs, p.trend_cutoff_hz, p.trend_order, "butterworth")
    if method == EdaMethod.BESSEL_LP:
        return dsp.lowpass(x, fs, p.trend_cutoff_hz, p.trend_order, "bessel")
    if method == EdaMethod.SAVGOL:
        return dsp.savgol(x, p.window_s, p.trend_order, fs)
    if method == EdaMethod.MOVING_AVG:
        return dsp.moving_average(x, int(round(p.window_s * fs)))
    if method == EdaMethod.EXP_MOVING_AVG:
        return dsp.ema(x, int(round(p.window_s * fs)))
    if method == EdaMethod.MEDIAN_SAVGOL:
        return dsp.savgol(dsp.median_smooth(x, p.median_s, fs),
                          p.window_s, p.trend_order, fs)
    if method == EdaMethod.HILBERT_ENV:
        banded = dsp.bandpass(x, fs, *p.hilbert_band_hz, p.hilbert_order,
                              "butterworth")
        env = dsp.hilbert_envelope(banded, fs)
        # the envelope of the AC band rides on the trace's own mean level,
        # which keeps constants fixed points like the linear methods
        return dsp.lowpass(env, fs, p.trend_cutoff_hz, p.trend_order) + float(x.mean())
    if method == EdaMethod.WAVELET_APPROX:
        return dsp.dwt_approx(x, fs, p.trend_cutoff_hz)
    raise InputError(f"unknown EDA method: {method!r}")


def extract_eda_trend(trace: RoiTrace, method: EdaMethod,
                      params: EdaParams = DEFAULT_PARAMS) -> BiosignalEstimate:
    """Extract the slow sudomotor trend of one ROI trace at 1 Hz.

    Invalid gaps up to 2 s are bridged by linear interpolation before
    smoothing; longer gaps keep their invalid marking, which is carried
    through to the decimated output. Requires at least 60 s of valid data.

    Parameters
    ----------
    trace : RoiTrace
        ROI temperature trace, nominally 30 Hz.
    method : EdaMethod
        Which of the eight smoothers to apply.
    params : EdaParams
        Shared extractor settings; the defaults are the reference
        configuration used across the package.

    Returns
    -------
    BiosignalEstimate
        1 Hz trend with kind EDA_TREND; timestamps start at 0.
    """
    min_valid = int(round(params.min_valid_s * trace.fps))
    n_valid = int(trace.valid.sum())
    if n_valid < min_valid:
        raise TooFewSamplesError(
            f"trend extraction needs at least {params.min_valid_s:.0f} s of valid "
            f"samples ({min_valid}), trace has {n_valid}",
            minimum=min_valid,
            got=n_valid,
        )
    values, valid = bridge_short_gaps(
        trace.values, trace.valid, trace.fps, MAX_BRIDGE_GAP_S)
    smoothed = apply_eda_method(values, trace.fps, method, params)

    stride = int(round(trace.fps / params.output_rate_hz))
    if stride < 1:
        raise InputError(
            f"trace rate {trace.fps} Hz is below the "
            f"{params.output_rate_hz} Hz output rate")
    return BiosignalEstimate(
        kind=SignalKind.EDA_TREND,
        rate_hz=params.output_rate_hz,
        values=smoothed[::stride].copy(),
        valid=valid[::stride].copy(),
        t0=0.0,
    )
