"""Heart- and breathing-rate estimation: fusion, tracking, postprocessing."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from thermovitals import dsp
from thermovitals.errors import InputError, TooFewSamplesError
from thermovitals.model import BiosignalEstimate, RoiKind, RoiTrace, SignalKind
from thermovitals.rates import (
    CARDIAC_CONFIG,
    RESPIRATORY_CONFIG,
    RateEstimatorConfig,
    estimate_br,
    estimate_hr,
    estimate_rate_track,
    omit_fuse,
    postprocess_rates,
)

FS = 30.0


def _trace(roi, values, fps=FS, valid=None):
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = np.ones(len(values), dtype=bool)
    return RoiTrace(roi=roi, aggregation="mean", fps=fps, values=values,
                    valid=np.asarray(valid, dtype=bool))


def _cardiac_traces(duration_s=300.0, cardiac_amp=0.2, artifact_amp=2.0,
                    noise=0.01, bpm=72.0, seed=0):
    """Four ROI channels sharing a strong 0.5 Hz artifact; a weak cardiac
    tone rides on each with slightly different gain."""
    rng = np.random.default_rng(seed)
    n = int(duration_s * FS)
    t = np.arange(n) / FS
    artifact = np.sin(2 * np.pi * 0.5 * t + 0.3)
    cardiac = np.sin(2 * np.pi * (bpm / 60.0) * t)
    gains = {RoiKind.FOREHEAD: 1.0, RoiKind.NOSE: 0.8,
             RoiKind.CHEEK_L: 0.6, RoiKind.CHEEK_R: 0.7}
    out = {}
    for roi, g in gains.items():
        x = (30000.0 + artifact_amp * artifact + cardiac_amp * g * cardiac
             + noise * rng.normal(size=n))
        out[roi] = _trace(roi, x)
    return out


def _resp_traces(duration_s=300.0, bpm=15.0, snr_db=0.0, seed=0):
    rng = np.random.default_rng(seed)
    n = int(duration_s * FS)
    t = np.arange(n) / FS
    resp = np.sin(2 * np.pi * (bpm / 60.0) * t)
    sigma = resp.std() / 10 ** (snr_db / 20.0)
    out = {}
    for roi, g in ((RoiKind.NOSE, 3.0), (RoiKind.CHEEK_L, 1.0),
                   (RoiKind.CHEEK_R, 1.0)):
        x = 30000.0 + g * resp + sigma * rng.normal(size=n)
        out[roi] = _trace(roi, x)
    return out


class TestConfigValidation:
    def test_band_ordering_enforced(self):
        with pytest.raises(InputError):
            RateEstimatorConfig(kind=SignalKind.HEART_RATE, band_hz=(3.5, 1.0),
                                window_s=15.0, step_s=1.0, valid_bpm=(60, 180))

    def test_window_must_resolve_band_floor(self):
        with pytest.raises(InputError):
            RateEstimatorConfig(kind=SignalKind.BREATHING_RATE,
                                band_hz=(0.12, 0.55), window_s=10.0,
                                step_s=1.0, valid_bpm=(7, 45))

    def test_default_chains(self):
        assert CARDIAC_CONFIG.band_hz == (1.0, 3.5)
        assert CARDIAC_CONFIG.window_s == 15.0
        assert CARDIAC_CONFIG.prefilter_hz == (0.3, 4.0)
        assert CARDIAC_CONFIG.apply_median
        assert RESPIRATORY_CONFIG.band_hz == (0.12, 0.55)
        assert RESPIRATORY_CONFIG.window_s == 25.0
        assert RESPIRATORY_CONFIG.prefilter_hz == (0.12, 2.0)
        assert not RESPIRATORY_CONFIG.apply_median
        assert RESPIRATORY_CONFIG.min_peak_ratio == 3.0


class TestOmitFuse:
    def test_shared_artifact_removed(self):
        traces = _cardiac_traces()
        channels = [traces[r].values for r in
                    (RoiKind.FOREHEAD, RoiKind.NOSE, RoiKind.CHEEK_L,
                     RoiKind.CHEEK_R)]
        fused = omit_fuse(channels, (1.0, 3.5), FS)
        assert not fused.fallback
        # cardiac peak must dominate the cardiac band after fusion
        assert fused.peak_ratio > 50.0
        sp = dsp.welch_psd(fused.signal, FS)
        peak = dsp.parabolic_peak(sp, (1.0, 3.5))
        assert abs(60.0 * peak.freq_hz - 72.0) < 2.0

    def test_in_band_shared_component_rejected(self):
        """A shared artifact whose harmonic lands inside the cardiac band
        dominates every raw channel; only the fused residual finds the
        true cardiac line."""
        rng = np.random.default_rng(7)
        n = int(300 * FS)
        t = np.arange(n) / FS
        artifact = np.sin(2 * np.pi * 0.5 * t) + 0.4 * np.sin(2 * np.pi * 1.2 * t)
        cardiac = np.sin(2 * np.pi * (126.0 / 60.0) * t)
        channels = []
        for g in (1.0, 0.8, 0.6, 0.7):
            x = (2.0 * artifact + 0.15 * g * cardiac
                 + 0.01 * rng.normal(size=n))
            channels.append(dsp.bandpass(x, FS, 0.3, 4.0, 4))
        for c in channels:
            raw_peak = dsp.parabolic_peak(dsp.welch_psd(c, FS), (1.0, 3.5))
            assert abs(raw_peak.freq_hz - 1.2) < 0.05  # fooled by the artifact
        fused = omit_fuse(channels, (1.0, 3.5), FS, prefilter=False)
        peak = dsp.parabolic_peak(dsp.welch_psd(fused.signal, FS), (1.0, 3.5))
        assert abs(60.0 * peak.freq_hz - 126.0) < 2.0

    def test_identical_channels_fall_back(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=3000)
        fused = omit_fuse([x, x.copy()], (1.0, 3.5), FS, prefilter=False)
        assert fused.fallback

    def test_needs_two_channels(self):
        with pytest.raises(InputError):
            omit_fuse([np.zeros(100)], (1.0, 3.5), FS)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InputError):
            omit_fuse([np.zeros(100), np.zeros(99)], (1.0, 3.5), FS)

    def test_constant_channels_rejected(self):
        with pytest.raises(InputError):
            omit_fuse([np.ones(100), np.ones(100)], (1.0, 3.5), FS,
                      prefilter=False)


class TestEstimateRateTrack:
    def test_pure_tone_tracked(self):
        t = np.arange(int(120 * FS)) / FS
        x = np.sin(2 * np.pi * 1.5 * t)
        est = estimate_rate_track(x, FS, CARDIAC_CONFIG)
        assert est.valid.all()
        np.testing.assert_allclose(est.values, 90.0, atol=0.5)

    def test_timestamps_at_window_centres(self):
        t = np.arange(int(60 * FS)) / FS
        x = np.sin(2 * np.pi * 1.5 * t)
        est = estimate_rate_track(x, FS, CARDIAC_CONFIG)
        assert est.t0 == pytest.approx(7.5)
        assert est.rate_hz == pytest.approx(1.0)
        expected = len(range(0, len(x) - int(15 * FS) + 1, int(FS)))
        assert len(est) == expected

    def test_white_noise_mostly_gated_out(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=int(300 * FS))
        est = estimate_rate_track(x, FS, CARDIAC_CONFIG)
        assert est.valid.mean() < 0.2

    def test_mostly_invalid_window_gated(self):
        t = np.arange(int(60 * FS)) / FS
        x = np.sin(2 * np.pi * 1.5 * t)
        valid = np.ones(len(x), dtype=bool)
        valid[: int(20 * FS)] = False
        est = estimate_rate_track(x, FS, CARDIAC_CONFIG, valid=valid)
        assert not est.valid[0]
        assert est.valid[-1]

    def test_input_shorter_than_window_rejected(self):
        with pytest.raises(TooFewSamplesError):
            estimate_rate_track(np.zeros(100), FS, CARDIAC_CONFIG)


class TestPostprocessRates:
    def test_outlier_interpolated_then_median_smoothed(self):
        raw = BiosignalEstimate(
            kind=SignalKind.HEART_RATE, rate_hz=1.0,
            values=np.array([72.0, 71.0, 250.0, 73.0]),
            valid=np.ones(4, dtype=bool), t0=7.5)
        out = postprocess_rates(raw, CARDIAC_CONFIG)
        assert out.valid.all()
        np.testing.assert_allclose(out.values, [72.0, 72.0, 72.0, 73.0])

    def test_long_invalid_run_not_bridged(self):
        n = 30
        values = np.full(n, 72.0)
        values[5:20] = 300.0  # 15 samples out of range > gap_max 10
        raw = BiosignalEstimate(kind=SignalKind.HEART_RATE, rate_hz=1.0,
                                values=values, valid=np.ones(n, dtype=bool))
        out = postprocess_rates(raw, CARDIAC_CONFIG)
        assert not out.valid[5:20].any()
        assert out.valid[:5].all() and out.valid[20:].all()

    def test_leading_out_of_range_stays_invalid(self):
        raw = BiosignalEstimate(kind=SignalKind.HEART_RATE, rate_hz=1.0,
                                values=np.array([250.0, 72.0, 73.0]),
                                valid=np.ones(3, dtype=bool))
        out = postprocess_rates(raw, CARDIAC_CONFIG)
        assert not out.valid[0]

    def test_no_median_for_breathing(self):
        values = np.array([15.0, 15.0, 22.0, 15.0, 15.0])
        raw = BiosignalEstimate(kind=SignalKind.BREATHING_RATE, rate_hz=1.0,
                                values=values, valid=np.ones(5, dtype=bool))
        out = postprocess_rates(raw, RESPIRATORY_CONFIG)
        # the spike is in range and survives: no median on this chain
        assert out.values[2] == pytest.approx(22.0)


class TestEstimateHr:
    def test_recovers_cardiac_rate_under_dominant_artifact(self):
        traces = _cardiac_traces(cardiac_amp=0.2, artifact_amp=2.0)
        est = estimate_hr(traces)
        assert est.kind == SignalKind.HEART_RATE
        assert est.valid.mean() > 0.8
        err = np.abs(est.values[est.valid] - 72.0)
        assert err.mean() < 2.0

    def test_modulated_rate_followed(self):
        n = int(300 * FS)
        t = np.arange(n) / FS
        bpm = 72.0 + 6.0 * np.sin(2 * np.pi * t / 150.0)
        phase = 2 * np.pi * np.cumsum(bpm / 60.0) / FS
        rng = np.random.default_rng(5)
        artifact = np.sin(2 * np.pi * 0.5 * t)
        out = {}
        for roi, g in ((RoiKind.FOREHEAD, 1.0), (RoiKind.NOSE, 0.8),
                       (RoiKind.CHEEK_L, 0.6), (RoiKind.CHEEK_R, 0.7)):
            x = (30000.0 + 2.0 * artifact + 0.2 * g * np.sin(phase)
                 + 0.01 * rng.normal(size=n))
            out[roi] = _trace(roi, x)
        est = estimate_hr(out)
        t_est = est.times()
        truth = 72.0 + 6.0 * np.sin(2 * np.pi * t_est / 150.0)
        mae = np.abs(est.values[est.valid] - truth[est.valid]).mean()
        assert mae < 2.0

    def test_no_cardiac_content_mostly_invalid(self):
        traces = _cardiac_traces(cardiac_amp=0.0)
        est = estimate_hr(traces)
        assert (~est.valid).mean() >= 0.8

    def test_needs_two_channels(self):
        traces = _cardiac_traces()
        only = {RoiKind.FOREHEAD: traces[RoiKind.FOREHEAD]}
        with pytest.raises(InputError):
            estimate_hr(only)

    def test_needs_thirty_joint_valid_seconds(self):
        traces = _cardiac_traces(duration_s=60.0)
        broken = {}
        for roi, tr in traces.items():
            valid = np.zeros(len(tr), dtype=bool)
            valid[: int(20 * FS)] = True
            broken[roi] = _trace(roi, tr.values, valid=valid)
        with pytest.raises(TooFewSamplesError):
            estimate_hr(broken)


class TestEstimateBr:
    def test_recovers_breathing_rate_at_zero_snr(self):
        traces = _resp_traces(snr_db=0.0)
        est = estimate_br(traces)
        assert est.kind == SignalKind.BREATHING_RATE
        assert est.valid.any()
        mae = np.abs(est.values[est.valid] - 15.0).mean()
        assert mae < 1.0

    def test_slow_modulation_followed(self):
        n = int(600 * FS)
        t = np.arange(n) / FS
        bpm = 15.0 + 3.0 * np.sin(2 * np.pi * t / 300.0)
        phase = 2 * np.pi * np.cumsum(bpm / 60.0) / FS
        rng = np.random.default_rng(2)
        resp = np.sin(phase)
        sigma = resp.std()
        out = {}
        for roi, g in ((RoiKind.NOSE, 3.0), (RoiKind.CHEEK_L, 1.0),
                       (RoiKind.CHEEK_R, 1.0)):
            x = 30000.0 + g * resp + sigma * rng.normal(size=n)
            out[roi] = _trace(roi, x)
        est = estimate_br(out)
        t_est = est.times()
        truth = 15.0 + 3.0 * np.sin(2 * np.pi * t_est / 300.0)
        mae = np.abs(est.values[est.valid] - truth[est.valid]).mean()
        assert mae < 1.0

    def test_nose_required(self):
        traces = _resp_traces()
        del traces[RoiKind.NOSE]
        with pytest.raises(InputError) as exc_info:
            estimate_br(traces)
        assert "nose" in str(exc_info.value)

    def test_nose_alone_suffices(self):
        traces = _resp_traces()
        only = {RoiKind.NOSE: traces[RoiKind.NOSE]}
        est = estimate_br(only)
        mae = np.abs(est.values[est.valid] - 15.0).mean()
        assert mae < 1.0

    def test_custom_config_respected(self):
        traces = _resp_traces()
        cfg = dataclasses.replace(RESPIRATORY_CONFIG, window_s=40.0)
        est = estimate_br(traces, cfg)
        assert est.t0 == pytest.approx(20.0)
