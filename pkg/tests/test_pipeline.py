"""End-to-end pipeline tests on synthetic sessions with known physiology."""

import numpy as np
import pytest

from thermovitals.config import RunConfig
from thermovitals.eda import EdaMethod
from thermovitals.errors import InputError
from thermovitals.io import SessionBundle
from thermovitals.metrics import eda_agreement
from thermovitals.model import RoiKind, SessionMeta, SignalKind
from thermovitals.pipeline import (
    breathing_rate,
    eda_trend,
    evaluate_eda,
    evaluate_rate,
    heart_rate,
    prepare_traces,
    process_session,
    resample_traces,
)
from thermovitals.synthetic import SyntheticSpec, gen_session, render_frames


@pytest.fixture(scope="module")
def cfg():
    return RunConfig()


@pytest.fixture(scope="module")
def traces_30hz(bundle, cfg):
    return prepare_traces(bundle, cfg)


class TestPrepareTraces:
    def test_full_trace_set_at_processing_rate(self, traces_30hz):
        assert set(traces_30hz) == set(RoiKind)
        n = int(np.floor((2250 - 1) / 7.5 * 30.0 + 1e-9)) + 1
        for tr in traces_30hz.values():
            assert tr.fps == 30.0
            assert len(tr) == n

    def test_resample_preserves_slow_content(self, bundle, traces_30hz):
        native = bundle.traces[RoiKind.NOSE]
        out = traces_30hz[RoiKind.NOSE]
        # decimating 30 Hz back to the native 7.5 Hz grid must reproduce
        # the input samples (cubic spline interpolates through them)
        np.testing.assert_allclose(out.values[::4][:2250], native.values,
                                   rtol=0, atol=1e-6)

    def test_derived_traces_present(self, traces_30hz):
        cheeks = traces_30hz[RoiKind.CHEEKS]
        left = traces_30hz[RoiKind.CHEEK_L]
        right = traces_30hz[RoiKind.CHEEK_R]
        np.testing.assert_allclose(
            cheeks.values, (left.values + right.values) / 2.0, atol=1e-6)

    def test_already_at_rate_passthrough(self, bundle, cfg):
        native = bundle.traces
        out = resample_traces(native, 7.5)
        assert out[RoiKind.NOSE] is native[RoiKind.NOSE]

    def test_frames_route_matches_traces_route(self, cfg):
        spec = SyntheticSpec(duration_s=90.0, fps=5.0, seed=2)
        session = gen_session(spec)
        frames, track = render_frames(session.traces)
        meta = SessionMeta(session_id="render")
        bundle = SessionBundle(meta=meta, frames=frames, landmarks=track)
        out = prepare_traces(bundle, cfg)
        # painted rects are clean, so the extracted 30 Hz nose trace must
        # track the synthetic input almost perfectly
        n = len(session.traces[RoiKind.NOSE])
        recovered = out[RoiKind.NOSE].values[::6][:n]
        r = np.corrcoef(recovered, session.traces[RoiKind.NOSE].values)[0, 1]
        assert r > 0.998


class TestChains:
    def test_eda_trend_cell(self, traces_30hz, bundle, cfg):
        est = eda_trend(traces_30hz, RoiKind.NOSE,
                        EdaMethod.BUTTERWORTH_LP, cfg)
        assert est.kind == SignalKind.EDA_TREND
        assert est.rate_hz == 1.0
        ref = bundle.references["PEDA"]
        report = eda_agreement(est, ref.values, reference_times=ref.times)
        assert report.pcc_abs > 0.99
        assert abs(report.tau_star_s) <= 1.0

    def test_missing_roi_named(self, traces_30hz, cfg):
        sub = {RoiKind.NOSE: traces_30hz[RoiKind.NOSE]}
        with pytest.raises(InputError, match="'forehead'"):
            eda_trend(sub, RoiKind.FOREHEAD, EdaMethod.BUTTERWORTH_LP, cfg)

    def test_heart_rate_recovers_constant_bpm(self, traces_30hz, cfg):
        est = heart_rate(traces_30hz, cfg)
        assert est.kind == SignalKind.HEART_RATE
        assert est.valid.all()
        np.testing.assert_allclose(est.values[est.valid], 72.0, atol=1.0)

    def test_breathing_rate_recovers_constant_bpm(self, traces_30hz, cfg):
        est = breathing_rate(traces_30hz, cfg)
        assert est.kind == SignalKind.BREATHING_RATE
        assert est.valid.all()
        np.testing.assert_allclose(est.values[est.valid], 15.0, atol=1.0)


class TestEvaluate:
    def test_eda_evaluation_wrapper(self, traces_30hz, bundle, cfg):
        est = eda_trend(traces_30hz, RoiKind.NOSE,
                        EdaMethod.BUTTERWORTH_LP, cfg)
        report = evaluate_eda(est, bundle.references["PEDA"])
        assert report.n_overlap > 250
        assert report.pcc_abs > 0.99

    def test_rate_evaluation_wrapper(self, traces_30hz, bundle, cfg):
        est = heart_rate(traces_30hz, cfg)
        ref = bundle.references["PP"]
        hr_ref = type(ref)(name="HR", units="bpm",
                           values=np.full(300, 72.0),
                           times=np.arange(300.0), uniform=True)
        agreement = evaluate_rate(est, hr_ref)
        assert agreement.mae < 1.0
        assert agreement.coverage > 0.9


class TestProcessSession:
    def test_happy_path(self, bundle, cfg):
        result = process_session(bundle, cfg)
        assert set(result) == {"traces", "hr", "br", "errors"}
        assert result["errors"] == {}
        assert result["hr"].kind == SignalKind.HEART_RATE
        assert result["br"].kind == SignalKind.BREATHING_RATE

    def test_chain_failure_collected_not_raised(self, bundle, cfg, monkeypatch):
        import thermovitals.pipeline as pipeline_mod

        def boom(traces, config):
            raise InputError("no usable cardiac channels")

        monkeypatch.setattr(pipeline_mod.rates, "estimate_hr", boom)
        result = process_session(bundle, cfg)
        assert result["hr"] is None
        assert result["errors"] == {"hr": "no usable cardiac channels"}
        assert result["br"] is not None
