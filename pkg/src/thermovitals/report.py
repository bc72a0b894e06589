"""Static report artifacts from a finished sweep: tables and SVG plots.

Everything here is deterministic: figures carry no timestamps (the SVG
``Date`` metadata is suppressed), element ids derive from a fixed hash
salt, and table rows keep the grid's fixed ordering.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InputError
from .io import ReferenceSeries
from .model import BiosignalEstimate

_HASHSALT = "thermovitals"


def _save(fig, path: str) -> None:
    with matplotlib.rc_context({"svg.hashsalt": _HASHSALT}):
        fig.savefig(path, format="svg", metadata={"Date": None},
                    bbox_inches="tight")
    plt.close(fig)


def _ok_rows(rows: list[dict], reference: str) -> list[dict]:
    picked = [r for r in rows
              if r["status"] == "ok" and r["reference"] == reference]
    if not picked:
        raise InputError(f"no successful grid rows for reference {reference!r}")
    return picked


def _grid_order(rows: list[dict]) -> tuple[list[str], list[str]]:
    """ROI and method names in first-appearance (grid) order."""
    rois: list[str] = []
    methods: list[str] = []
    for r in rows:
        if r["roi"] not in rois:
            rois.append(r["roi"])
        if r["method"] not in methods:
            methods.append(r["method"])
    return rois, methods


def write_summary_table(path: str, rows: list[dict]) -> None:
    """Mean +/- std of pcc_abs per (reference, roi, method), as CSV."""
    refs: list[str] = []
    for r in rows:
        if r["reference"] not in refs:
            refs.append(r["reference"])
    rois, methods = _grid_order(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reference", "roi", "method",
                         "pcc_abs_mean", "pcc_abs_std", "n_sessions"])
        for ref in refs:
            for roi in rois:
                for method in methods:
                    vals = [r["pcc_abs"] for r in rows
                            if r["status"] == "ok" and r["reference"] == ref
                            and r["roi"] == roi and r["method"] == method]
                    if not vals:
                        continue
                    arr = np.asarray(vals)
                    writer.writerow([ref, roi, method,
                                     repr(float(arr.mean())),
                                     repr(float(arr.std())),
                                     str(arr.size)])


def plot_heatmap(path: str, rows: list[dict], reference: str) -> None:
    """ROI x method grid of mean pcc_abs for one reference."""
    picked = _ok_rows(rows, reference)
    rois, methods = _grid_order(picked)
    mat = np.full((len(rois), len(methods)), np.nan)
    for i, roi in enumerate(rois):
        for j, method in enumerate(methods):
            vals = [r["pcc_abs"] for r in picked
                    if r["roi"] == roi and r["method"] == method]
            if vals:
                mat[i, j] = float(np.mean(vals))

    fig, ax = plt.subplots(figsize=(1.8 + 0.9 * len(methods),
                                    1.2 + 0.55 * len(rois)))
    masked = np.ma.masked_invalid(mat)
    im = ax.imshow(masked, vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(methods)), methods, rotation=40, ha="right")
    ax.set_yticks(range(len(rois)), rois)
    for i in range(len(rois)):
        for j in range(len(methods)):
            if not np.isnan(mat[i, j]):
                ax.text(j, i, f"{mat[i, j]:.2f}", ha="center", va="center",
                        color="white" if mat[i, j] < 0.6 else "black",
                        fontsize=8)
    ax.set_title(f"mean |PCC| vs {reference}")
    fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, path)


def plot_lag_histogram(path: str, rows: list[dict], reference: str,
                       bin_width_s: float = 10.0) -> None:
    """Histogram of each session's best-configuration lag for one reference."""
    picked = _ok_rows(rows, reference)
    best: dict[str, dict] = {}
    for r in picked:
        cur = best.get(r["session_id"])
        if cur is None or r["pcc_abs"] > cur["pcc_abs"]:
            best[r["session_id"]] = r
    taus = np.asarray([b["tau_star_s"] for b in best.values()])

    lim = max(120.0, float(np.abs(taus).max()) if taus.size else 120.0)
    edges = np.arange(-lim, lim + bin_width_s, bin_width_s)
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.hist(taus, bins=edges, color="#33658a", edgecolor="white")
    ax.axvline(float(np.median(taus)), color="#f26419", linestyle="--",
               label=f"median {np.median(taus):+.1f} s")
    ax.set_xlabel("lag of best configuration [s]")
    ax.set_ylabel("sessions")
    ax.set_title(f"thermal-to-reference lag vs {reference}")
    ax.legend()
    _save(fig, path)


def plot_trend_overlay(path: str, estimate: BiosignalEstimate,
                       reference: ReferenceSeries, label: str) -> None:
    """One session's extracted trend on top of its contact reference.

    Both series are standardized over their valid span so shape agreement
    is visible regardless of units.
    """
    t_est = estimate.times()
    ev = estimate.values[estimate.valid]
    if ev.size < 2 or len(reference) < 2:
        raise InputError("overlay needs at least two valid samples per series")

    def z(x: np.ndarray) -> np.ndarray:
        s = x.std()
        return (x - x.mean()) / (s if s > 0 else 1.0)

    fig, ax = plt.subplots(figsize=(7.0, 3.0))
    ax.plot(reference.times, z(reference.values), color="black", lw=1.0,
            label=reference.name)
    shown = np.where(estimate.valid, estimate.values, np.nan)
    scale = ev.std() if ev.std() > 0 else 1.0
    ax.plot(t_est, (shown - ev.mean()) / scale, color="#e4572e", lw=1.2,
            label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("z-scored amplitude")
    ax.set_title(f"trend overlay: {label} vs {reference.name}")
    ax.legend(loc="upper right")
    _save(fig, path)
