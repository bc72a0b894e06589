"""Contact-free sudomotor trends, heart rate and breathing rate from
thermal facial video.

The package turns a stack of 16-bit radiometric frames plus a facial
landmark track into per-ROI temperature traces, then into three 1 Hz
biosignal estimates, and evaluates them against contact ground truth.

Layout:

- :mod:`thermovitals.model`      shared immutable data types
- :mod:`thermovitals.roi`        landmark smoothing and ROI geometry
- :mod:`thermovitals.aggregate`  patch-to-scalar spatial aggregation
- :mod:`thermovitals.dsp`        filters, wavelets, spectra, correlation
- :mod:`thermovitals.eda`        the eight sudomotor-trend extractors
- :mod:`thermovitals.rates`      OMIT fusion and windowed HR/BR tracking
- :mod:`thermovitals.metrics`    agreement metrics against ground truth
- :mod:`thermovitals.sweep`      ROI x method evaluation harness
- :mod:`thermovitals.synthetic`  signal generator and frame renderer
- :mod:`thermovitals.io`         on-disk session format
- :mod:`thermovitals.pipeline`   end-to-end session processing
- :mod:`thermovitals.cli`        command-line entry point
"""

from __future__ import annotations

from .errors import (
    FormatError,
    InputError,
    NonFiniteError,
    ThermovitalsError,
    TooFewSamplesError,
    ZeroVarianceError,
)
from .model import (
    AgeGroup,
    BiosignalEstimate,
    Condition,
    LandmarkFrame,
    LandmarkTrack,
    RoiKind,
    RoiTrace,
    SessionMeta,
    Sex,
    SignalKind,
    ThermalFrameSequence,
)

__version__ = "0.1.0"

__all__ = [
    "AgeGroup",
    "BiosignalEstimate",
    "Condition",
    "FormatError",
    "InputError",
    "LandmarkFrame",
    "LandmarkTrack",
    "NonFiniteError",
    "RoiKind",
    "RoiTrace",
    "SessionMeta",
    "Sex",
    "SignalKind",
    "ThermalFrameSequence",
    "ThermovitalsError",
    "TooFewSamplesError",
    "ZeroVarianceError",
    "__version__",
]
