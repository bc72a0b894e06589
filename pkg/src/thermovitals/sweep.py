"""ROI x method evaluation harness with grouped summaries and oracle selection.

The grid is (session, roi, method) x reference. Every cell is attempted;
failures become structured per-cell errors and drop out of the summaries
instead of aborting the run. Summaries are the mean +/- std of pcc_abs
across sessions, overall and grouped by condition, subject, sex and age
group. The oracle picks, per session and reference, the configuration
with the highest pcc_abs; its mean across sessions bounds every fixed
configuration from above.

Serialization is deterministic: fixed cell order, repr floats, sorted
JSON keys. Two runs over identical inputs emit identical bytes.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import pipeline
from .config import RunConfig
from .eda import EdaMethod
from .errors import InputError
from .io import SessionBundle
from .metrics import AgreementReport, Polarity
from .model import RoiKind, SessionMeta

GRID_COLUMNS = (
    "session_id", "roi", "method", "reference", "status",
    "pcc_abs", "pcc_signed", "spearman", "r_max", "tau_star_s",
    "trend_agreement_pct", "polarity", "n_overlap", "error",
)


@dataclass(frozen=True)
class GridCell:
    """One evaluated (session, roi, method, reference) combination."""

    session_id: str
    roi: RoiKind
    method: EdaMethod
    reference: str
    report: AgreementReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass(frozen=True)
class SweepResult:
    """Full grid plus the session metadata the groupings key on."""

    cells: tuple[GridCell, ...]
    meta: dict[str, SessionMeta]
    rois: tuple[RoiKind, ...]
    methods: tuple[EdaMethod, ...]
    references: tuple[str, ...]

    def ok_cells(self) -> list[GridCell]:
        return [c for c in self.cells if c.ok]

    def summaries(self) -> dict:
        """Nested mean/std/n of pcc_abs, overall and per metadata group."""
        out = {"overall": self._summarize(lambda m: None)}
        for key, fn in (
            ("by_condition", lambda m: m.condition.value),
            ("by_subject", lambda m: m.subject_id),
            ("by_sex", lambda m: m.sex.value),
            ("by_age_group", lambda m: m.age_group.value),
        ):
            out[key] = self._summarize(fn)
        return out

    def _summarize(self, group_of) -> dict:
        buckets: dict = {}
        for cell in self.cells:
            if not cell.ok:
                continue
            group = group_of(self.meta[cell.session_id])
            keys = (cell.reference, cell.roi.value, cell.method.value)
            if group is None:
                node = buckets
            else:
                node = buckets.setdefault(group, {})
            node.setdefault(keys, []).append(cell.report.pcc_abs)

        def collapse(node: dict) -> dict:
            tree: dict = {}
            for (ref, roi, method), vals in node.items():
                arr = np.asarray(vals)
                tree.setdefault(ref, {}).setdefault(roi, {})[method] = {
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                    "n": int(arr.size),
                }
            return tree

        if buckets and isinstance(next(iter(buckets)), tuple):
            return collapse(buckets)
        return {group: collapse(node) for group, node in buckets.items()}

    def oracle(self) -> dict:
        """Per-session best configuration by pcc_abs, per reference."""
        out: dict = {}
        for ref in self.references:
            per_session: dict = {}
            for cell in self.cells:
                if not cell.ok or cell.reference != ref:
                    continue
                best = per_session.get(cell.session_id)
                if best is None or cell.report.pcc_abs > best["pcc_abs"]:
                    per_session[cell.session_id] = {
                        "roi": cell.roi.value,
                        "method": cell.method.value,
                        "pcc_abs": cell.report.pcc_abs,
                    }
            scores = [v["pcc_abs"] for v in per_session.values()]
            out[ref] = {
                "per_session": per_session,
                "mean": float(np.mean(scores)) if scores else None,
                "n": len(scores),
            }
        return out


def polarity_census(result: SweepResult, roi: RoiKind, method: EdaMethod
                    ) -> dict[str, float]:
    """Fraction of sessions with Positive polarity at one grid point."""
    out: dict[str, float] = {}
    for ref in result.references:
        flags = [c.report.polarity == Polarity.POSITIVE
                 for c in result.cells
                 if c.ok and c.reference == ref
                 and c.roi == roi and c.method == method]
        if not flags:
            raise InputError(
                f"no successful cells for {roi.value}/{method.value} vs {ref}")
        out[ref] = float(np.mean(flags))
    return out


def _session_cells(bundle: SessionBundle, cfg: RunConfig,
                   rois: tuple[RoiKind, ...], methods: tuple[EdaMethod, ...],
                   references: tuple[str, ...]) -> list[GridCell]:
    """All cells of one session, in fixed (roi, method, reference) order."""
    sid = bundle.meta.session_id
    cells: list[GridCell] = []
    try:
        traces = pipeline.prepare_traces(bundle, cfg)
        prep_error = None
    except Exception as exc:  # a broken session must not sink the sweep
        traces = None
        prep_error = f"{type(exc).__name__}: {exc}"

    for roi_kind in rois:
        for method in methods:
            estimate = None
            est_error = prep_error
            if est_error is None:
                try:
                    estimate = pipeline.eda_trend(traces, roi_kind, method, cfg)
                except Exception as exc:
                    est_error = f"{type(exc).__name__}: {exc}"
            for ref_name in references:
                if est_error is not None:
                    cells.append(GridCell(sid, roi_kind, method, ref_name,
                                          error=est_error))
                    continue
                ref = bundle.references.get(ref_name)
                if ref is None:
                    cells.append(GridCell(sid, roi_kind, method, ref_name,
                                          error="reference not present"))
                    continue
                try:
                    report = pipeline.evaluate_eda(estimate, ref)
                    cells.append(GridCell(sid, roi_kind, method, ref_name,
                                          report=report))
                except Exception as exc:
                    cells.append(GridCell(sid, roi_kind, method, ref_name,
                                          error=f"{type(exc).__name__}: {exc}"))
    return cells


def _session_cells_star(args) -> list[GridCell]:
    return _session_cells(*args)


def run_sweep(
    bundles: list[SessionBundle],
    cfg: RunConfig | None = None,
    rois: list[RoiKind] | None = None,
    methods: list[EdaMethod] | None = None,
    references: list[str] | None = None,
    parallel: int | None = None,
) -> SweepResult:
    """Evaluate the full grid over the given sessions.

    ``rois``/``methods``/``references`` default to the config's grid;
    ``parallel`` > 1 distributes sessions over worker processes. The
    result is identical regardless of the degree of parallelism.
    """
    if not bundles:
        raise InputError("run_sweep needs at least one session")
    cfg = cfg or RunConfig()
    rois_t = tuple(rois) if rois is not None else tuple(cfg.sweep_rois())
    methods_t = tuple(methods) if methods is not None else tuple(cfg.sweep_methods())
    refs_t = tuple(references) if references is not None else tuple(cfg.references)
    if not rois_t or not methods_t or not refs_t:
        raise InputError("rois, methods and references must be non-empty")
    ids = [b.meta.session_id for b in bundles]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate session ids: {sorted(ids)}")

    degree = parallel if parallel is not None else cfg.parallel
    tasks = [(b, cfg, rois_t, methods_t, refs_t) for b in bundles]
    if degree > 1 and len(bundles) > 1:
        with ProcessPoolExecutor(max_workers=degree) as pool:
            per_session = list(pool.map(_session_cells_star, tasks))
    else:
        per_session = [_session_cells_star(t) for t in tasks]

    cells = tuple(c for chunk in per_session for c in chunk)
    meta = {b.meta.session_id: b.meta for b in bundles}
    return SweepResult(cells=cells, meta=meta, rois=rois_t,
                       methods=methods_t, references=refs_t)


# ---------------------------------------------------------------------------
# serialization

def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_grid_csv(path: str, result: SweepResult) -> None:
    """One row per grid cell, fixed column and row order, repr floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_COLUMNS)
        for c in result.cells:
            if c.ok:
                r = c.report
                writer.writerow([
                    c.session_id, c.roi.value, c.method.value, c.reference,
                    "ok", _fmt(r.pcc_abs), _fmt(r.pcc_signed), _fmt(r.spearman),
                    _fmt(r.r_max), _fmt(r.tau_star_s),
                    _fmt(r.trend_agreement_pct), r.polarity.value,
                    str(r.n_overlap), "",
                ])
            else:
                writer.writerow([
                    c.session_id, c.roi.value, c.method.value, c.reference,
                    "error", "", "", "", "", "", "", "", "", c.error,
                ])


def write_summary_json(path: str, result: SweepResult) -> None:
    payload = {
        "rois": [r.value for r in result.rois],
        "methods": [m.value for m in result.methods],
        "references": list(result.references),
        "sessions": {
            sid: {
                "subject_id": m.subject_id,
                "condition": m.condition.value,
                "sex": m.sex.value,
                "age_group": m.age_group.value,
            } for sid, m in result.meta.items()
        },
        "summaries": result.summaries(),
        "oracle": result.oracle(),
        "n_cells": len(result.cells),
        "n_failed": sum(1 for c in result.cells if not c.ok),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_grid_csv(path: str) -> list[dict]:
    """Rows of a grid.csv as dicts with floats parsed; for the report stage."""
    rows: list[dict] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed: dict = dict(row)
            for key in ("pcc_abs", "pcc_signed", "spearman", "r_max",
                        "tau_star_s", "trend_agreement_pct"):
                parsed[key] = float(row[key]) if row.get(key) else None
            parsed["n_overlap"] = int(row["n_overlap"]) if row.get("n_overlap") else None
            rows.append(parsed)
    return rows
