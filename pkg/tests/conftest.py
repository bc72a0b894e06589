"""Shared fixtures: synthetic sessions wrapped as loadable bundles."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from thermovitals.io import ReferenceSeries, SessionBundle
from thermovitals.model import SessionMeta
from thermovitals.synthetic import SyntheticSpec, gen_session


def make_bundle(
    session_id: str = "s0",
    duration_s: float = 300.0,
    fps: float = 7.5,
    seed: int = 0,
    polarity: int = 1,
    references: tuple[str, ...] = ("PEDA", "PP", "PP_NR"),
    **meta_kwargs,
) -> SessionBundle:
    """Build a trace-only SessionBundle around one synthetic session.

    All EDA-style references carry the same clean sudomotor shape; the
    agreement metrics are scale invariant, so one shape serves for every
    reference name.
    """
    spec = SyntheticSpec(duration_s=duration_s, fps=fps, seed=seed)
    if polarity != 1:
        spec = dataclasses.replace(
            spec, eda=dataclasses.replace(spec.eda, polarity=polarity))
    session = gen_session(spec)
    shape = session.references["eda"]
    times = np.arange(len(shape.values), dtype=np.float64) / shape.rate_hz
    units = {"PEDA": "kOhm", "PP": "degC^2", "PP_NR": "degC^2"}
    refs = {
        name: ReferenceSeries(
            name=name,
            units=units[name],
            values=shape.values.copy(),
            times=times.copy(),
            uniform=True,
        )
        for name in references
    }
    meta = SessionMeta(session_id=session_id, **meta_kwargs)
    return SessionBundle(
        meta=meta,
        frames=None,
        landmarks=None,
        traces=dict(session.traces),
        references=refs,
    )


@pytest.fixture(scope="session")
def bundle() -> SessionBundle:
    return make_bundle()


@pytest.fixture(scope="session")
def synthetic_session():
    return gen_session(SyntheticSpec(duration_s=300.0, fps=7.5, seed=0))
