"""End-to-end session processing: frames or traces in, 1 Hz estimates out.

The stages compose as

    frames + landmarks --track/aggregate--> native-fps ROI traces
    native-fps traces  --cubic resample--> 30 Hz traces
    30 Hz traces       --eda/hr/br chains--> 1 Hz BiosignalEstimates

and every stage takes its knobs from a RunConfig.
"""

from __future__ import annotations

from . import aggregate, eda, metrics, rates, roi
from .config import RunConfig
from .errors import InputError
from .io import ReferenceSeries, SessionBundle
from .model import BiosignalEstimate, RoiKind, RoiTrace, resample_to_timeline

#: all traces a session can feed downstream (geometric plus both derived)
ALL_ROIS = tuple(RoiKind)


def traces_from_frames(bundle: SessionBundle, cfg: RunConfig
                       ) -> dict[RoiKind, RoiTrace]:
    """Track ROIs over the frame stack and aggregate every ROI trace."""
    frames = bundle.frames
    if frames is None or bundle.landmarks is None:
        raise InputError(
            f"session {bundle.meta.session_id!r} has no frames/landmarks")
    rects = roi.track_rois(
        bundle.landmarks,
        n_frames=frames.n_frames,
        fps=frames.fps,
        frame_dims=(frames.width, frames.height),
        alpha=cfg.ema_alpha,
        carry_forward_s=cfg.carry_forward_s,
    )
    return aggregate.extract_traces(
        frames, rects, ALL_ROIS, cfg.aggregation_map())


def resample_traces(traces: dict[RoiKind, RoiTrace], target_hz: float
                    ) -> dict[RoiKind, RoiTrace]:
    """Cubic-spline each trace onto a uniform ``target_hz`` grid.

    Validity is carried over; gaps wider than the bridging limit stay
    invalid on the new grid. Traces already at the target rate pass
    through untouched.
    """
    out: dict[RoiKind, RoiTrace] = {}
    for kind, tr in traces.items():
        if abs(tr.fps - target_hz) < 1e-9:
            out[kind] = tr
            continue
        values, valid = resample_to_timeline(
            tr.values, tr.fps, target_hz, method="cubic_spline", valid=tr.valid)
        out[kind] = RoiTrace(roi=kind, aggregation=tr.aggregation,
                             fps=target_hz, values=values, valid=valid)
    return out


def prepare_traces(bundle: SessionBundle, cfg: RunConfig
                   ) -> dict[RoiKind, RoiTrace]:
    """The session's full trace set at the common processing rate."""
    if bundle.traces:
        native = aggregate.combine_derived(bundle.traces)
    else:
        native = traces_from_frames(bundle, cfg)
    return resample_traces(native, cfg.processing_rate_hz)


def eda_trend(traces: dict[RoiKind, RoiTrace], roi_kind: RoiKind,
              method: eda.EdaMethod, cfg: RunConfig) -> BiosignalEstimate:
    """One cell of the trend grid: one ROI, one smoothing method."""
    if roi_kind not in traces:
        raise InputError(f"session has no {roi_kind.value!r} trace")
    return eda.extract_eda_trend(traces[roi_kind], method, cfg.eda)


def heart_rate(traces: dict[RoiKind, RoiTrace], cfg: RunConfig
               ) -> BiosignalEstimate:
    return rates.estimate_hr(traces, cfg.hr)


def breathing_rate(traces: dict[RoiKind, RoiTrace], cfg: RunConfig
                   ) -> BiosignalEstimate:
    return rates.estimate_br(traces, cfg.br)


def evaluate_eda(estimate: BiosignalEstimate, ref: ReferenceSeries,
                 max_lag_s: float = metrics.LAG_WINDOW_S) -> metrics.AgreementReport:
    return metrics.eda_agreement(
        estimate, ref.values, reference_times=ref.times, max_lag_s=max_lag_s)


def evaluate_rate(estimate: BiosignalEstimate, ref: ReferenceSeries
                  ) -> metrics.RateAgreement:
    return metrics.rate_agreement(
        estimate, ref.values, reference_times=ref.times)


def process_session(bundle: SessionBundle, cfg: RunConfig) -> dict:
    """Run every chain on one session; estimates plus per-chain errors.

    Returns a dict with ``traces`` (30 Hz), ``hr``/``br`` estimates (or
    None), and ``errors`` mapping a failed chain to its message."""
    traces = prepare_traces(bundle, cfg)
    result: dict = {"traces": traces, "hr": None, "br": None, "errors": {}}
    for key, fn in (("hr", heart_rate), ("br", breathing_rate)):
        try:
            result[key] = fn(traces, cfg)
        except InputError as exc:
            result["errors"][key] = str(exc)
    return result
