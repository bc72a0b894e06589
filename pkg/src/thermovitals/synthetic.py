"""Synthetic session generator with exactly known embedded physiology.

Builds ROI temperature traces (and optionally rendered 16-bit frame stacks)
containing a band-limited sudomotor trend, a cardiac tone with a weak
second harmonic, a respiratory tone, a shared motion artifact, white noise
and slow drift. The clean components are returned alongside, so every
downstream stage can be checked against an exact oracle without any
recorded data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .errors import InputError
from .model import (
    GEOMETRIC_ROIS,
    LandmarkFrame,
    LandmarkTrack,
    RoiKind,
    RoiTrace,
    ThermalFrameSequence,
)
from .roi import RoiGeometry, derive_rois

BpmProfile = float | tuple[tuple[float, float], ...]

# relative strength of each component per ROI; the trend shows everywhere,
# the pulse favors the forehead, breathing favors the nose (3x the cheeks)
EDA_GAIN = {
    RoiKind.NOSE: 1.0, RoiKind.CHEEK_L: 0.8, RoiKind.CHEEK_R: 0.8,
    RoiKind.FOREHEAD: 0.6, RoiKind.EYE_L: 0.5, RoiKind.EYE_R: 0.5,
}
CARDIAC_GAIN = {
    RoiKind.FOREHEAD: 1.0, RoiKind.NOSE: 0.8, RoiKind.CHEEK_L: 0.6,
    RoiKind.CHEEK_R: 0.6, RoiKind.EYE_L: 0.0, RoiKind.EYE_R: 0.0,
}
RESP_GAIN = {
    RoiKind.NOSE: 3.0, RoiKind.CHEEK_L: 1.0, RoiKind.CHEEK_R: 1.0,
    RoiKind.FOREHEAD: 0.0, RoiKind.EYE_L: 0.0, RoiKind.EYE_R: 0.0,
}
# typical facial radiometric levels in camera counts
BASE_COUNTS = {
    RoiKind.NOSE: 30500.0, RoiKind.CHEEK_L: 30000.0, RoiKind.CHEEK_R: 30050.0,
    RoiKind.FOREHEAD: 31000.0, RoiKind.EYE_L: 31200.0, RoiKind.EYE_R: 31150.0,
}

CARDIAC_SECOND_HARMONIC = 0.3
EDA_SHAPE_CUTOFF_ORDER = 4
# shape filter corner sits below the stated band limit so the order-4
# rolloff keeps essentially all trend power inside it
EDA_SHAPE_CUTOFF_FRAC = 0.6


@dataclass(frozen=True)
class EdaSpecGroup:
    """Slow sudomotor trend parameters.

    The amplitude-modulated carrier exists for the envelope-demodulation
    trend route: it rides between the respiratory and cardiac search bands
    and its envelope follows the same trend shape.
    """

    band_limit_hz: float = 0.05
    amplitude: float = 8.0
    polarity: int = 1
    am_amplitude: float = 4.0
    am_carrier_hz: float = 0.8
    am_depth: float = 0.6


@dataclass(frozen=True)
class ToneSpecGroup:
    """A physiological tone: constant bpm or piecewise-linear (t_s, bpm) knots."""

    bpm: BpmProfile
    amplitude: float

    def bpm_at(self, t: np.ndarray) -> np.ndarray:
        if isinstance(self.bpm, (int, float)):
            return np.full(len(t), float(self.bpm))
        knots = np.asarray(self.bpm, dtype=np.float64)
        return np.interp(t, knots[:, 0], knots[:, 1])


@dataclass(frozen=True)
class NoiseSpecGroup:
    white_sigma: float = 0.0
    drift_sigma: float = 0.0      # random-walk step scale, counts per sqrt(s)


@dataclass(frozen=True)
class MotionSpecGroup:
    landmark_jitter_px: float = 0.0


@dataclass(frozen=True)
class ArtifactSpecGroup:
    """Shared sinusoidal motion artifact injected equally into all channels."""

    freq_hz: float = 0.5
    amplitude: float = 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    duration_s: float = 300.0
    fps: float = 7.5
    seed: int = 0
    eda: EdaSpecGroup = EdaSpecGroup()
    cardiac: ToneSpecGroup = ToneSpecGroup(bpm=72.0, amplitude=2.0)
    resp: ToneSpecGroup = ToneSpecGroup(bpm=15.0, amplitude=5.0)
    noise: NoiseSpecGroup = NoiseSpecGroup()
    motion: MotionSpecGroup = MotionSpecGroup()
    artifact: ArtifactSpecGroup = ArtifactSpecGroup()

    def validate(self) -> None:
        if self.duration_s < 60.0:
            raise InputError(f"duration must be >= 60 s, got {self.duration_s}")
        if self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        if self.eda.polarity not in (-1, 1):
            raise InputError(f"polarity must be -1 or +1, got {self.eda.polarity}")
        if not 0 < self.eda.band_limit_hz < self.fps / 2:
            raise InputError(
                f"eda band limit must sit in (0, fps/2), got {self.eda.band_limit_hz}")
        amplitudes = {
            "eda": self.eda.amplitude, "am": self.eda.am_amplitude,
            "cardiac": self.cardiac.amplitude, "resp": self.resp.amplitude,
            "white": self.noise.white_sigma, "drift": self.noise.drift_sigma,
            "artifact": self.artifact.amplitude,
            "jitter": self.motion.landmark_jitter_px,
        }
        for name, a in amplitudes.items():
            if a < 0:
                raise InputError(f"{name} amplitude must be >= 0, got {a}")


@dataclass(frozen=True)
class ReferenceSignal:
    """A clean embedded component sampled on its own uniform grid."""

    values: np.ndarray
    rate_hz: float


@dataclass(frozen=True)
class SyntheticSession:
    spec: SyntheticSpec
    traces: dict[RoiKind, RoiTrace]
    clean: dict[RoiKind, np.ndarray]       # traces before noise and drift
    references: dict[str, ReferenceSignal]  # "eda", "hr_bpm", "br_bpm"
    landmarks: LandmarkTrack


@dataclass(frozen=True)
class CanonicalLayout:
    """Frontal face geometry for rendered frames, in fractions of the frame.

    Point fractions are relative to the face bounding box.
    """

    bbox_frac: tuple[float, float, float, float] = (0.15, 0.10, 0.70, 0.80)
    eye_l_frac: tuple[float, float] = (0.25, 0.40)
    eye_r_frac: tuple[float, float] = (0.75, 0.40)
    nose_frac: tuple[float, float] = (0.50, 0.60)
    mouth_l_frac: tuple[float, float] = (0.35, 0.78)
    mouth_r_frac: tuple[float, float] = (0.65, 0.78)
    background_counts: float = 29000.0

    def landmark_frame(self, frame_idx: int, dims: tuple[int, int]) -> LandmarkFrame:
        w, h = dims
        bx, by, bw, bh = self.bbox_frac
        bbox = (bx * w, by * h, bw * w, bh * h)

        def pt(frac: tuple[float, float]) -> tuple[float, float]:
            return (bbox[0] + frac[0] * bbox[2], bbox[1] + frac[1] * bbox[3])

        return LandmarkFrame(
            frame_idx=frame_idx,
            confidence=1.0,
            bbox=bbox,
            points=(pt(self.eye_l_frac), pt(self.eye_r_frac), pt(self.nose_frac),
                    pt(self.mouth_l_frac), pt(self.mouth_r_frac)),
        )


DEFAULT_FRAME_DIMS = (160, 120)


def _phase(bpm: np.ndarray, fps: float) -> np.ndarray:
    """Accumulated phase of a tone whose instantaneous rate is bpm."""
    freq_hz = bpm / 60.0
    return 2.0 * np.pi * np.cumsum(freq_hz) / fps


def gen_session(spec: SyntheticSpec,
                dims: tuple[int, int] = DEFAULT_FRAME_DIMS) -> SyntheticSession:
    """Generate one synthetic session's ROI traces and clean references.

    The sudomotor shape is white noise lowpassed to the configured band
    and standardized; every ROI receives it scaled by its gain, the
    session polarity and the trend amplitude. References hold the clean
    shape (before polarity) and the bpm profiles, so estimator output can
    be scored exactly.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.fps))
    t = np.arange(n, dtype=np.float64) / spec.fps

    shape = dsp.lowpass(rng.normal(size=n), spec.fps,
                        EDA_SHAPE_CUTOFF_FRAC * spec.eda.band_limit_hz,
                        EDA_SHAPE_CUTOFF_ORDER)
    shape = (shape - shape.mean()) / shape.std()

    cardiac_bpm = spec.cardiac.bpm_at(t)
    cardiac_phi = _phase(cardiac_bpm, spec.fps)
    cardiac = np.sin(cardiac_phi) + CARDIAC_SECOND_HARMONIC * np.sin(2.0 * cardiac_phi)
    resp_bpm = spec.resp.bpm_at(t)
    resp = np.sin(_phase(resp_bpm, spec.fps))
    artifact_phase = rng.uniform(0.0, 2.0 * np.pi)
    artifact = np.sin(2.0 * np.pi * spec.artifact.freq_hz * t + artifact_phase)

    trend_signed = spec.eda.polarity * shape
    am_env = np.maximum(0.0, 1.0 + spec.eda.am_depth * trend_signed)
    am = am_env * np.sin(2.0 * np.pi * spec.eda.am_carrier_hz * t)

    traces: dict[RoiKind, RoiTrace] = {}
    clean: dict[RoiKind, np.ndarray] = {}
    for roi in GEOMETRIC_ROIS:
        comp = (
            BASE_COUNTS[roi]
            + spec.eda.amplitude * EDA_GAIN[roi] * trend_signed
            + spec.eda.am_amplitude * EDA_GAIN[roi] * am
            + spec.cardiac.amplitude * CARDIAC_GAIN[roi] * cardiac
            + spec.resp.amplitude * RESP_GAIN[roi] * resp
            + spec.artifact.amplitude * artifact
        )
        clean[roi] = comp
        noisy = comp.copy()
        if spec.noise.white_sigma > 0:
            noisy = noisy + spec.noise.white_sigma * rng.normal(size=n)
        if spec.noise.drift_sigma > 0:
            step = spec.noise.drift_sigma / np.sqrt(spec.fps)
            noisy = noisy + np.cumsum(step * rng.normal(size=n))
        traces[roi] = RoiTrace(
            roi=roi,
            aggregation="synthetic",
            fps=spec.fps,
            values=noisy,
            valid=np.ones(n, dtype=bool),
        )

    grid_1hz = np.arange(int(np.floor(t[-1])) + 1, dtype=np.float64)
    references = {
        "eda": ReferenceSignal(values=shape.copy(), rate_hz=spec.fps),
        "hr_bpm": ReferenceSignal(values=spec.cardiac.bpm_at(grid_1hz), rate_hz=1.0),
        "br_bpm": ReferenceSignal(values=spec.resp.bpm_at(grid_1hz), rate_hz=1.0),
    }

    layout = CanonicalLayout()
    entries = []
    jitter = spec.motion.landmark_jitter_px
    for i in range(n):
        lm = layout.landmark_frame(i, dims)
        if jitter > 0:
            dx, dy = rng.normal(scale=jitter, size=2)
            lm = LandmarkFrame(
                frame_idx=i,
                confidence=1.0,
                bbox=(lm.bbox[0] + dx, lm.bbox[1] + dy, lm.bbox[2], lm.bbox[3]),
                points=tuple((px + dx, py + dy) for px, py in lm.points),
            )
        entries.append(lm)
    return SyntheticSession(
        spec=spec,
        traces=traces,
        clean=clean,
        references=references,
        landmarks=LandmarkTrack(tuple(entries)),
    )


def render_frames(
    traces: dict[RoiKind, RoiTrace],
    layout: CanonicalLayout = CanonicalLayout(),
    dims: tuple[int, int] = DEFAULT_FRAME_DIMS,
    pixel_noise_sigma: float = 0.0,
    landmark_jitter_px: float = 0.0,
    seed: int = 0,
    geometry: RoiGeometry = RoiGeometry(),
) -> tuple[ThermalFrameSequence, LandmarkTrack]:
    """Paint ROI traces into constant-background 16-bit frames.

    Each geometric ROI's rectangle (derived from the canonical layout) is
    filled with its trace value plus optional per-pixel noise. The
    returned landmark track points at the painted geometry, optionally
    jittered, so running the extraction pipeline on the output must
    recover the inputs.
    """
    if not traces:
        raise InputError("no traces to render")
    lengths = {len(tr) for tr in traces.values()}
    if len(lengths) != 1:
        raise InputError(f"traces disagree on length: {sorted(lengths)}")
    n = lengths.pop()
    fps = next(iter(traces.values())).fps
    w, h = dims

    base_lm = layout.landmark_frame(0, dims)
    rects = derive_rois(base_lm, dims, geometry)
    for roi in traces:
        if roi not in rects:
            raise InputError(f"no canonical rectangle for ROI {roi.value!r}")
        if not rects[roi].valid:
            raise InputError(
                f"frame dims {dims} are too small: ROI {roi.value!r} has no area")

    for roi, tr in traces.items():
        bad = np.nonzero((tr.values < 0.0) | (tr.values > 65535.0))[0]
        if bad.size:
            raise InputError(
                f"trace {roi.value!r} leaves the 16-bit range at sample "
                f"{int(bad[0])}: value {float(tr.values[int(bad[0])]):g}")

    rng = np.random.default_rng(seed)
    frames = np.full((n, h, w), int(round(layout.background_counts)), dtype=np.uint16)
    for i in range(n):
        canvas = np.full((h, w), layout.background_counts, dtype=np.float64)
        for roi, tr in traces.items():
            r = rects[roi]
            patch = np.full((r.h, r.w), tr.values[i])
            if pixel_noise_sigma > 0:
                patch = patch + rng.normal(scale=pixel_noise_sigma, size=(r.h, r.w))
            canvas[r.y: r.y + r.h, r.x: r.x + r.w] = patch
        frames[i] = np.clip(np.rint(canvas), 0, 65535).astype(np.uint16)

    entries = []
    for i in range(n):
        lm = layout.landmark_frame(i, dims)
        if landmark_jitter_px > 0:
            dx, dy = rng.normal(scale=landmark_jitter_px, size=2)
            lm = LandmarkFrame(
                frame_idx=i,
                confidence=1.0,
                bbox=(lm.bbox[0] + dx, lm.bbox[1] + dy, lm.bbox[2], lm.bbox[3]),
                points=tuple((px + dx, py + dy) for px, py in lm.points),
            )
        entries.append(lm)
    return (
        ThermalFrameSequence(frames=frames, fps=fps),
        LandmarkTrack(tuple(entries)),
    )
