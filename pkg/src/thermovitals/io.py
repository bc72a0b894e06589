"""On-disk session format: frames, landmarks, traces, references, estimates.

A session is one directory:

    session/
      meta.json        subject metadata (and fps for trace-only sessions)
      frames/          frames.raw + frames.json sidecar, or 16-bit images
      landmarks.csv    per-frame face detections (required with frames)
      traces.csv       pre-extracted ROI traces (alternative to frames)
      refs/            one CSV per contact reference: PEDA, PP, PP_NR, HR, BR

All floating-point CSV/JSON values are written with ``repr``, the shortest
decimal that round-trips exactly, so writer -> loader reproduces in-memory
values bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InputError
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

#: contact reference channels and their units; refs/<name>.csv
REFERENCE_UNITS = {
    "PEDA": "kOhm",
    "PP": "degC^2",
    "PP_NR": "degC^2",
    "HR": "bpm",
    "BR": "bpm",
}

RAW_DTYPE = "u16le"

LANDMARK_COLUMNS = (
    "frame_idx", "conf", "bb_x", "bb_y", "bb_w", "bb_h",
    "eye_l_x", "eye_l_y", "eye_r_x", "eye_r_y", "nose_x", "nose_y",
    "mouth_l_x", "mouth_l_y", "mouth_r_x", "mouth_r_y",
)

_IMAGE_EXTS = (".pgm", ".png", ".tif", ".tiff")


@dataclass(frozen=True)
class ReferenceSeries:
    """A contact ground-truth channel with its own timestamps."""

    name: str
    units: str
    values: np.ndarray
    times: np.ndarray
    uniform: bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        if values.shape != times.shape or values.ndim != 1:
            raise InputError(
                f"reference {self.name!r}: values/times shape mismatch "
                f"{values.shape} vs {times.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def rate_hz(self) -> float:
        """Nominal sample rate; exact only when ``uniform`` is True."""
        if len(self.times) < 2:
            return 0.0
        return (len(self.times) - 1) / (self.times[-1] - self.times[0])


@dataclass(frozen=True)
class SessionBundle:
    """Everything one recording session provides."""

    meta: SessionMeta
    frames: ThermalFrameSequence | None = None
    landmarks: LandmarkTrack | None = None
    traces: dict[RoiKind, RoiTrace] = field(default_factory=dict)
    references: dict[str, ReferenceSeries] = field(default_factory=dict)

    def __post_init__(self):
        if self.frames is None and not self.traces:
            raise InputError(
                f"session {self.meta.session_id!r} has neither frames nor traces")
        if self.frames is not None and self.landmarks is None:
            raise InputError(
                f"session {self.meta.session_id!r} has frames but no landmarks")


# ---------------------------------------------------------------------------
# frames

def _load_raw(raw_path: str, sidecar_path: str) -> ThermalFrameSequence:
    try:
        with open(sidecar_path, encoding="utf-8") as fh:
            side = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"raw frames need a JSON sidecar: {sidecar_path} not found")
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad JSON sidecar {sidecar_path}: {exc}")

    for key in ("width", "height", "count", "dtype"):
        if key not in side:
            raise FormatError(f"sidecar {sidecar_path} is missing {key!r}")
    if side["dtype"] != RAW_DTYPE:
        raise FormatError(
            f"sidecar dtype must be {RAW_DTYPE!r}, got {side['dtype']!r}")
    w, h, count = int(side["width"]), int(side["height"]), int(side["count"])
    expected = w * h * count * 2
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise FormatError(
            f"{raw_path}: expected {expected} bytes "
            f"({count} x {h} x {w} x 2), got {actual}")
    data = np.fromfile(raw_path, dtype="<u2").reshape(count, h, w)
    # native byte order for downstream arithmetic
    frames = np.ascontiguousarray(data.astype(np.uint16))
    fps = float(side["fps"]) if "fps" in side else None
    return frames, fps


def _load_image(path: str) -> np.ndarray:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        return _read_pgm(path)
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - pillow ships with matplotlib
        raise FormatError(
            f"cannot read {path}: Pillow is required for {ext} images")
    with Image.open(path) as im:
        if im.mode in ("L", "P"):
            raise FormatError(f"{path}: 16-bit required, got 8-bit image")
        if not im.mode.startswith("I;16"):
            raise FormatError(
                f"{path}: single-channel 16-bit required, got mode {im.mode!r}")
        return np.asarray(im, dtype=np.uint16)


def _read_pgm(path: str) -> np.ndarray:
    """Binary PGM (P5); 16-bit samples are big-endian per the format."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        # skip whitespace and '#' comments between header tokens
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval < 256:
        raise FormatError(f"{path}: 16-bit required, got maxval {maxval}")
    if maxval > 65535:
        raise FormatError(f"{path}: maxval {maxval} exceeds 16-bit range")
    pos += 1  # single whitespace after maxval
    data = np.frombuffer(blob, dtype=">u2", count=w * h, offset=pos)
    if data.size != w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(np.uint16)


def load_frames(path: str, fps: float | None = None) -> ThermalFrameSequence:
    """Load a frame stack from a raw+sidecar pair or a directory.

    ``path`` may be the ``.raw`` file itself, or a directory containing
    either one ``.raw`` file (with its ``.json`` sidecar) or 16-bit
    single-channel image files taken in lexicographic order.  ``fps`` is
    required unless the sidecar provides it; a sidecar value wins.
    """
    side_fps: float | None = None
    if os.path.isfile(path):
        if not path.endswith(".raw"):
            raise FormatError(f"expected a .raw file or a directory, got {path}")
        frames, side_fps = _load_raw(path, path[:-4] + ".json")
    elif os.path.isdir(path):
        raws = sorted(f for f in os.listdir(path) if f.endswith(".raw"))
        if raws:
            if len(raws) > 1:
                raise FormatError(f"{path}: multiple .raw files, expected one")
            raw = os.path.join(path, raws[0])
            frames, side_fps = _load_raw(raw, raw[:-4] + ".json")
        else:
            names = sorted(
                f for f in os.listdir(path)
                if os.path.splitext(f)[1].lower() in _IMAGE_EXTS)
            if not names:
                raise FormatError(f"{path}: no frame files found")
            imgs = []
            shape = None
            for name in names:
                img = _load_image(os.path.join(path, name))
                if shape is None:
                    shape = img.shape
                elif img.shape != shape:
                    raise FormatError(
                        f"{os.path.join(path, name)}: frame size {img.shape} "
                        f"differs from first frame {shape}")
                imgs.append(img)
            frames = np.stack(imgs)
    else:
        raise FormatError(f"frames path does not exist: {path}")

    use_fps = side_fps if side_fps is not None else fps
    if use_fps is None:
        raise InputError(f"{path}: fps not in sidecar and no --fps given")
    return ThermalFrameSequence(frames=frames, fps=float(use_fps))


def write_frames(dir_path: str, seq: ThermalFrameSequence,
                 stem: str = "frames") -> str:
    """Write ``<dir>/<stem>.raw`` plus its JSON sidecar; returns the raw path."""
    os.makedirs(dir_path, exist_ok=True)
    raw_path = os.path.join(dir_path, stem + ".raw")
    seq.frames.astype("<u2").tofile(raw_path)
    side = {
        "width": seq.width,
        "height": seq.height,
        "count": seq.n_frames,
        "dtype": RAW_DTYPE,
        "fps": seq.fps,
    }
    with open(os.path.join(dir_path, stem + ".json"), "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return raw_path


# ---------------------------------------------------------------------------
# landmarks

def _parse_cell(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise FormatError(
            f"non-numeric value {cell.strip()!r} at row {row}, column {column!r}")


def load_landmarks(path: str) -> LandmarkTrack:
    """Read a landmark CSV; duplicate frames keep the highest-confidence row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        col = {name: i for i, name in enumerate(header)}
        missing = [c for c in LANDMARK_COLUMNS if c not in col]
        if missing:
            raise FormatError(f"{path}: missing column {missing[0]!r}")

        best: dict[int, LandmarkFrame] = {}
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            vals = {c: _parse_cell(row[col[c]], row_idx, c) for c in LANDMARK_COLUMNS}
            frame_idx = int(vals["frame_idx"])
            entry = LandmarkFrame(
                frame_idx=frame_idx,
                confidence=vals["conf"],
                bbox=(vals["bb_x"], vals["bb_y"], vals["bb_w"], vals["bb_h"]),
                points=(
                    (vals["eye_l_x"], vals["eye_l_y"]),
                    (vals["eye_r_x"], vals["eye_r_y"]),
                    (vals["nose_x"], vals["nose_y"]),
                    (vals["mouth_l_x"], vals["mouth_l_y"]),
                    (vals["mouth_r_x"], vals["mouth_r_y"]),
                ),
            )
            old = best.get(frame_idx)
            if old is None or entry.confidence > old.confidence:
                best[frame_idx] = entry
    return LandmarkTrack(entries=tuple(best[i] for i in sorted(best)))


def write_landmarks(path: str, track: LandmarkTrack) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LANDMARK_COLUMNS)
        for e in track:
            writer.writerow(
                [e.frame_idx, repr(e.confidence)]
                + [repr(v) for v in e.bbox]
                + [repr(v) for p in e.points for v in p])


# ---------------------------------------------------------------------------
# traces

def load_traces(path: str, fps: float) -> dict[RoiKind, RoiTrace]:
    """Read pre-extracted ROI traces written by :func:`write_traces`.

    Column pairs are ``<roi>:<aggregation>`` and ``<roi>:<aggregation>:valid``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        if not header or header[0] != "frame_idx":
            raise FormatError(f"{path}: first column must be 'frame_idx'")
        specs: list[tuple[RoiKind, str]] = []
        for name in header[1:]:
            if name.endswith(":valid"):
                continue
            parts = name.split(":")
            if len(parts) != 2:
                raise FormatError(
                    f"{path}: column {name!r} is not '<roi>:<aggregation>'")
            try:
                kind = RoiKind(parts[0])
            except ValueError:
                raise FormatError(f"{path}: unknown ROI {parts[0]!r}")
            if name + ":valid" not in header:
                raise FormatError(f"{path}: missing column {name + ':valid'!r}")
            specs.append((kind, parts[1]))
        col = {name: i for i, name in enumerate(header)}

        rows = []
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append([_parse_cell(c, row_idx, header[i])
                         for i, c in enumerate(row)])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=np.float64)
    out: dict[RoiKind, RoiTrace] = {}
    for kind, agg in specs:
        name = f"{kind.value}:{agg}"
        out[kind] = RoiTrace(
            roi=kind,
            aggregation=agg,
            fps=fps,
            values=table[:, col[name]],
            valid=table[:, col[name + ":valid"]] > 0.5,
        )
    return out


def write_traces(path: str, traces: dict[RoiKind, RoiTrace]) -> None:
    if not traces:
        raise InputError("no traces to write")
    lengths = {len(t) for t in traces.values()}
    if len(lengths) != 1:
        raise InputError(f"traces have differing lengths: {sorted(lengths)}")
    n = lengths.pop()
    # stable column order: enum declaration order
    kinds = [k for k in RoiKind if k in traces]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["frame_idx"]
        for k in kinds:
            name = f"{k.value}:{traces[k].aggregation}"
            header += [name, name + ":valid"]
        writer.writerow(header)
        for i in range(n):
            row: list[str] = [str(i)]
            for k in kinds:
                t = traces[k]
                row += [repr(float(t.values[i])), str(int(t.valid[i]))]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# references

#: relative timestamp-jitter tolerance below which a series counts as uniform
_UNIFORM_RTOL = 1e-6


def load_reference(path: str, name: str, units: str | None = None
                   ) -> ReferenceSeries:
    """Read a ``time_s,value`` CSV; time must be strictly increasing."""
    if units is None:
        if name not in REFERENCE_UNITS:
            raise FormatError(
                f"unknown reference {name!r}; expected one of "
                f"{sorted(REFERENCE_UNITS)} or explicit units")
        units = REFERENCE_UNITS[name]
    times: list[float] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        if header[:2] != ["time_s", "value"]:
            raise FormatError(
                f"{path}: expected columns time_s,value, got {header[:2]}")
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            t = _parse_cell(row[0], row_idx, "time_s")
            v = _parse_cell(row[1], row_idx, "value")
            if times and t <= times[-1]:
                raise FormatError(f"{path}: time not increasing at row {row_idx}")
            times.append(t)
            values.append(v)
    if not times:
        raise FormatError(f"{path}: no data rows")
    t = np.asarray(times)
    dt = np.diff(t)
    uniform = bool(
        len(dt) == 0
        or np.all(np.abs(dt - dt.mean()) <= _UNIFORM_RTOL * abs(dt.mean())))
    return ReferenceSeries(name=name, units=units, values=np.asarray(values),
                           times=t, uniform=uniform)


def write_reference(path: str, values: np.ndarray,
                    times: np.ndarray | None = None,
                    rate_hz: float | None = None) -> None:
    values = np.asarray(values, dtype=np.float64)
    if times is None:
        if rate_hz is None or rate_hz <= 0:
            raise InputError("write_reference needs times or a positive rate_hz")
        times = np.arange(len(values)) / rate_hz
    times = np.asarray(times, dtype=np.float64)
    if times.shape != values.shape:
        raise InputError("times/values length mismatch")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for t, v in zip(times, values):
            writer.writerow([repr(float(t)), repr(float(v))])


# ---------------------------------------------------------------------------
# estimates

def load_estimate(path: str, kind: SignalKind) -> BiosignalEstimate:
    """Read a ``time_s,value,valid`` CSV written by :func:`write_estimate`."""
    times: list[float] = []
    values: list[float] = []
    valid: list[bool] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        if header[:3] != ["time_s", "value", "valid"]:
            raise FormatError(
                f"{path}: expected columns time_s,value,valid, got {header[:3]}")
        for row_idx, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            times.append(_parse_cell(row[0], row_idx, "time_s"))
            values.append(_parse_cell(row[1], row_idx, "value"))
            valid.append(_parse_cell(row[2], row_idx, "valid") > 0.5)
    if len(times) < 2:
        raise FormatError(f"{path}: need at least two samples")
    t = np.asarray(times)
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise FormatError(f"{path}: time not increasing at row "
                          f"{int(np.argmax(dt <= 0)) + 2}")
    if np.any(np.abs(dt - dt.mean()) > _UNIFORM_RTOL * abs(dt.mean())):
        raise FormatError(f"{path}: estimate timeline must be uniform")
    return BiosignalEstimate(
        kind=kind,
        rate_hz=1.0 / float(dt.mean()),
        values=np.asarray(values),
        valid=np.asarray(valid, dtype=bool),
        t0=float(t[0]),
    )


def write_estimate(path: str, est: BiosignalEstimate) -> None:
    t = est.times()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value", "valid"])
        for i in range(len(est)):
            writer.writerow([repr(float(t[i])), repr(float(est.values[i])),
                             str(int(est.valid[i]))])


# ---------------------------------------------------------------------------
# session assembly

def load_meta(path: str) -> tuple[SessionMeta, float | None]:
    """Read meta.json; returns the metadata and the optional trace fps."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"missing meta file: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad JSON in {path}: {exc}")
    if "session_id" not in data:
        raise FormatError(f"{path}: missing 'session_id'")
    try:
        meta = SessionMeta(
            session_id=str(data["session_id"]),
            subject_id=str(data.get("subject_id", "")),
            condition=Condition(data.get("condition", "Other")),
            condition_label=str(data.get("condition_label", "")),
            sex=Sex(data.get("sex", "Unknown")),
            age_group=AgeGroup(data.get("age_group", "Unknown")),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}")
    fps = data.get("fps")
    return meta, (float(fps) if fps is not None else None)


def write_meta(path: str, meta: SessionMeta, fps: float | None = None) -> None:
    data = {
        "session_id": meta.session_id,
        "subject_id": meta.subject_id,
        "condition": meta.condition.value,
        "condition_label": meta.condition_label,
        "sex": meta.sex.value,
        "age_group": meta.age_group.value,
    }
    if fps is not None:
        data["fps"] = fps
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_session(dir_path: str, fps: float | None = None) -> SessionBundle:
    """Assemble a SessionBundle from one session directory.

    Missing reference files are simply absent from the bundle; a missing
    frames/traces pair is an error.  ``fps`` overrides nothing that the
    session itself declares; it only fills gaps.
    """
    if not os.path.isdir(dir_path):
        raise InputError(f"session path is not a directory: {dir_path}")
    meta, meta_fps = load_meta(os.path.join(dir_path, "meta.json"))

    frames = None
    landmarks = None
    traces: dict[RoiKind, RoiTrace] = {}

    frames_dir = os.path.join(dir_path, "frames")
    if os.path.isdir(frames_dir):
        frames = load_frames(frames_dir, fps=meta_fps if meta_fps else fps)
        lm_path = os.path.join(dir_path, "landmarks.csv")
        if not os.path.isfile(lm_path):
            raise InputError(f"{dir_path}: frames present but no landmarks.csv")
        landmarks = load_landmarks(lm_path)

    traces_path = os.path.join(dir_path, "traces.csv")
    if os.path.isfile(traces_path):
        t_fps = meta_fps if meta_fps is not None else fps
        if t_fps is None and frames is not None:
            t_fps = frames.fps
        if t_fps is None:
            raise InputError(
                f"{dir_path}: traces.csv needs an fps (meta.json or --fps)")
        traces = load_traces(traces_path, fps=t_fps)

    references: dict[str, ReferenceSeries] = {}
    refs_dir = os.path.join(dir_path, "refs")
    if os.path.isdir(refs_dir):
        for name in sorted(os.listdir(refs_dir)):
            if not name.endswith(".csv"):
                continue
            ref_name = name[:-4]
            if ref_name not in REFERENCE_UNITS:
                raise FormatError(
                    f"{os.path.join(refs_dir, name)}: unknown reference "
                    f"{ref_name!r}; expected one of {sorted(REFERENCE_UNITS)}")
            references[ref_name] = load_reference(
                os.path.join(refs_dir, name), ref_name)

    return SessionBundle(meta=meta, frames=frames, landmarks=landmarks,
                         traces=traces, references=references)


def write_session(
    dir_path: str,
    meta: SessionMeta,
    frames: ThermalFrameSequence | None = None,
    landmarks: LandmarkTrack | None = None,
    traces: dict[RoiKind, RoiTrace] | None = None,
    references: dict[str, ReferenceSeries] | None = None,
) -> None:
    """Write a session directory in the layout :func:`load_session` reads."""
    if frames is None and not traces:
        raise InputError("write_session needs frames or traces")
    if frames is not None and landmarks is None:
        raise InputError("write_session: frames require landmarks")
    os.makedirs(dir_path, exist_ok=True)

    fps = None
    if traces:
        fps = next(iter(traces.values())).fps
    write_meta(os.path.join(dir_path, "meta.json"), meta, fps=fps)

    if frames is not None:
        write_frames(os.path.join(dir_path, "frames"), frames)
        write_landmarks(os.path.join(dir_path, "landmarks.csv"), landmarks)
    if traces:
        write_traces(os.path.join(dir_path, "traces.csv"), traces)
    if references:
        refs_dir = os.path.join(dir_path, "refs")
        os.makedirs(refs_dir, exist_ok=True)
        for name, ref in references.items():
            if name not in REFERENCE_UNITS:
                raise InputError(f"unknown reference name {name!r}")
            write_reference(os.path.join(refs_dir, name + ".csv"),
                            ref.values, times=ref.times)
