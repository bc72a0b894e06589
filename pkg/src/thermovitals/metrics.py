"""Agreement metrics between extracted estimates and contact references."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.stats

from . import dsp
from .errors import InputError, TooFewSamplesError, ZeroVarianceError
from .model import BiosignalEstimate

MIN_EDA_OVERLAP_S = 120.0
LAG_WINDOW_S = 120.0
MIN_RATE_SAMPLES = 30
TREND_EPS_FRAC = 1e-9


class Polarity(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"


@dataclass(frozen=True)
class AgreementReport:
    """Trend-level agreement between one EDA estimate and one reference.

    ``pcc_abs`` is the polarity-invariant Pearson correlation
    max(|r(e, ref)|, |r(-e, ref)|); ``polarity`` records which sign
    achieved it. ``r_max``/``tau_star`` come from the normalized lagged
    cross-correlation within the +-120 s window, and ``trend_agreement``
    is the percentage of time steps whose first differences share a sign.
    """

    pcc_abs: float
    pcc_signed: float
    spearman: float
    r_max: float
    tau_star_s: float
    trend_agreement_pct: float
    polarity: Polarity
    n_overlap: int


@dataclass(frozen=True)
class RateAgreement:
    """Windowed-rate agreement against a contact reference, in bpm."""

    mae: float
    rmse: float
    pcc: float
    bias: float          # mean(estimate - reference), signed
    n_valid: int
    coverage: float      # fraction of comparable time points with a valid estimate


def _reference_on_timeline(
    est_times: np.ndarray,
    reference: np.ndarray,
    reference_rate_hz: float | None,
    reference_times: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Linear resample of the reference onto the estimate timeline.

    Returns the resampled values and a mask of estimate samples that fall
    inside the reference's time span.
    """
    reference = np.asarray(reference, dtype=np.float64)
    if reference_times is not None:
        rt = np.asarray(reference_times, dtype=np.float64)
        if len(rt) != len(reference):
            raise InputError(
                f"{len(reference)} reference values but {len(rt)} timestamps")
        if len(rt) >= 2 and np.any(np.diff(rt) <= 0):
            raise InputError("reference timestamps must be strictly increasing")
    elif reference_rate_hz is not None:
        if reference_rate_hz <= 0:
            raise InputError(f"reference rate must be positive, got {reference_rate_hz}")
        rt = np.arange(len(reference), dtype=np.float64) / reference_rate_hz
    else:
        raise InputError("reference needs either a rate or explicit timestamps")
    if len(reference) < 2:
        raise TooFewSamplesError(
            "reference must have at least 2 samples", minimum=2, got=len(reference))
    in_span = (est_times >= rt[0]) & (est_times <= rt[-1])
    return np.interp(est_times, rt, reference), in_span


def trend_agreement_pct(e: np.ndarray, r: np.ndarray) -> float:
    """Percent of time steps whose first differences share a sign.

    Changes smaller than 1e-9 of the signal's own std count as zero, and
    zero matches zero; this keeps flat stretches from scoring as
    disagreement.
    """
    if len(e) != len(r):
        raise InputError(f"length mismatch: {len(e)} vs {len(r)}")
    if len(e) < 2:
        raise TooFewSamplesError(
            "trend agreement needs at least 2 samples", minimum=2, got=len(e))
    de = np.diff(np.asarray(e, dtype=np.float64))
    dr = np.diff(np.asarray(r, dtype=np.float64))
    se = np.sign(de) * (np.abs(de) >= TREND_EPS_FRAC * np.std(e))
    sr = np.sign(dr) * (np.abs(dr) >= TREND_EPS_FRAC * np.std(r))
    return float(np.mean(se == sr) * 100.0)


def _fill_invalid(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Interpolate over invalid samples (nearest value at the edges)."""
    if valid.all():
        return values.copy()
    idx = np.arange(len(values), dtype=np.float64)
    return np.interp(idx, idx[valid], values[valid])


def eda_agreement(
    estimate: BiosignalEstimate,
    reference: np.ndarray,
    reference_rate_hz: float | None = None,
    reference_times: np.ndarray | None = None,
    max_lag_s: float = LAG_WINDOW_S,
) -> AgreementReport:
    """All trend agreement metrics for one estimate/reference pair.

    The reference is linearly resampled to the estimate's 1 Hz timeline.
    Pearson and Spearman run over the jointly valid overlap; the lagged
    cross-correlation and trend agreement run over the contiguous overlap
    with invalid estimate samples bridged by interpolation. At least
    120 s of valid overlap is required. For overlaps shorter than twice
    the lag window the window shrinks to half the overlap.
    """
    times = estimate.times()
    ref_est, in_span = _reference_on_timeline(
        times, reference, reference_rate_hz, reference_times)
    joint = in_span & estimate.valid
    min_overlap = int(round(MIN_EDA_OVERLAP_S * estimate.rate_hz))
    if int(joint.sum()) < min_overlap:
        raise TooFewSamplesError(
            f"trend agreement needs at least {MIN_EDA_OVERLAP_S:.0f} s of valid "
            f"overlap ({min_overlap} samples), got {int(joint.sum())}",
            minimum=min_overlap,
            got=int(joint.sum()),
        )

    e_pairs = estimate.values[joint]
    r_pairs = ref_est[joint]
    if np.std(e_pairs) <= 0.0 or np.std(r_pairs) <= 0.0:
        raise ZeroVarianceError(
            "estimate or reference has zero variance over the overlap")
    pcc_signed = float(np.corrcoef(e_pairs, r_pairs)[0, 1])
    pcc_abs = max(abs(pcc_signed), abs(float(np.corrcoef(-e_pairs, r_pairs)[0, 1])))
    polarity = Polarity.POSITIVE if pcc_signed >= 0.0 else Polarity.NEGATIVE
    # average ranks make Spearman well-defined under ties
    ranks_e = scipy.stats.rankdata(e_pairs, method="average")
    ranks_r = scipy.stats.rankdata(r_pairs, method="average")
    if np.std(ranks_e) <= 0.0 or np.std(ranks_r) <= 0.0:
        raise ZeroVarianceError("constant ranks; Spearman undefined")
    spearman = float(np.corrcoef(ranks_e, ranks_r)[0, 1])

    span_idx = np.nonzero(in_span)[0]
    seg = slice(int(span_idx[0]), int(span_idx[-1]) + 1)
    e_seg = _fill_invalid(estimate.values[seg], estimate.valid[seg])
    r_seg = ref_est[seg]
    max_lag = int(round(max_lag_s * estimate.rate_hz))
    max_lag = min(max_lag, len(e_seg) // 2)
    xc = dsp.xcorr_normalized(e_seg, r_seg, max_lag)

    return AgreementReport(
        pcc_abs=pcc_abs,
        pcc_signed=pcc_signed,
        spearman=spearman,
        r_max=xc.r_max,
        tau_star_s=xc.tau_star / estimate.rate_hz,
        trend_agreement_pct=trend_agreement_pct(e_seg, r_seg),
        polarity=polarity,
        n_overlap=int(joint.sum()),
    )


def rate_agreement(
    estimate: BiosignalEstimate,
    reference: np.ndarray,
    reference_rate_hz: float | None = None,
    reference_times: np.ndarray | None = None,
) -> RateAgreement:
    """MAE/RMSE/PCC/bias of a rate track against a reference, in bpm.

    The reference is linearly resampled onto the estimate timeline and the
    error statistics run over jointly valid samples (at least 30).
    ``coverage`` is the fraction of comparable time points that carried a
    valid estimate. PCC is NaN when either side is constant.
    """
    times = estimate.times()
    ref_est, in_span = _reference_on_timeline(
        times, reference, reference_rate_hz, reference_times)
    joint = in_span & estimate.valid
    n_valid = int(joint.sum())
    if n_valid < MIN_RATE_SAMPLES:
        raise TooFewSamplesError(
            f"rate agreement needs at least {MIN_RATE_SAMPLES} jointly valid "
            f"samples, got {n_valid}",
            minimum=MIN_RATE_SAMPLES,
            got=n_valid,
        )
    err = estimate.values[joint] - ref_est[joint]
    if np.std(estimate.values[joint]) > 0.0 and np.std(ref_est[joint]) > 0.0:
        pcc = float(np.corrcoef(estimate.values[joint], ref_est[joint])[0, 1])
    else:
        pcc = float("nan")
    n_comparable = int(in_span.sum())
    return RateAgreement(
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        pcc=pcc,
        bias=float(np.mean(err)),
        n_valid=n_valid,
        coverage=n_valid / n_comparable if n_comparable else 0.0,
    )
