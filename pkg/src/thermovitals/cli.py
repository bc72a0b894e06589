"""Command-line interface.

Subcommands::

    synth    generate a synthetic session on disk
    extract  frames + landmarks -> ROI trace CSVs
    eda      one ROI/method trend -> 1 Hz CSV
    hr       heart-rate track -> 1 Hz CSV
    br       breathing-rate track -> 1 Hz CSV
    sweep    full ROI x method grid over sessions -> grid.csv + summary.json
    eval     estimate CSV vs reference CSV -> metrics on stdout
    report   tables and SVG plots from a sweep's grid.csv

Exit codes: 0 success, 1 bad input (including unknown flags), 2 internal
error. Every command with an output directory writes a provenance record
(config hash, library versions, seed) next to its artifacts.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as tvconfig
from . import io as tvio
from . import pipeline, report, sweep, synthetic
from .eda import EdaMethod
from .errors import InputError, ThermovitalsError
from .model import RoiKind, SessionMeta, SignalKind

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, per the CLI contract."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="thermovitals",
        description="Sudomotor trends, heart rate and breathing rate "
                    "from thermal facial video.",
    )
    parser.add_argument("--config", metavar="PATH",
                        help="run configuration JSON (default: "
                             f"${tvconfig.ENV_CONFIG_PATH} or built-ins)")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str, out_required: bool = True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", metavar="DIR", required=out_required,
                       help="output directory")
        return p

    p = add("synth", "generate a synthetic session")
    p.add_argument("--duration", type=float, default=300.0,
                   help="session length in seconds (default 300)")
    p.add_argument("--fps", type=float, default=7.5,
                   help="native frame rate (default 7.5)")
    p.add_argument("--seed", type=int, default=None,
                   help="generator seed (default: config seed)")
    p.add_argument("--polarity", type=int, choices=(-1, 1), default=1,
                   help="sign of the embedded trend (default +1)")
    p.add_argument("--frames", action="store_true",
                   help="also render 16-bit frames and a landmark track")

    p = add("extract", "extract ROI traces from frames + landmarks")
    p.add_argument("--session", metavar="DIR", required=True)
    p.add_argument("--fps", type=float, default=None,
                   help="frame rate when the session does not declare one")

    p = add("eda", "extract one sudomotor trend")
    p.add_argument("--session", metavar="DIR", required=True)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--roi", required=True, choices=[r.value for r in RoiKind])
    p.add_argument("--method", required=True,
                   choices=[m.value for m in EdaMethod])

    for name, help_ in (("hr", "estimate a heart-rate track"),
                        ("br", "estimate a breathing-rate track")):
        p = add(name, help_)
        p.add_argument("--session", metavar="DIR", required=True)
        p.add_argument("--fps", type=float, default=None)

    p = add("sweep", "evaluate the ROI x method grid over sessions")
    p.add_argument("--sessions", metavar="DIR", nargs="+", required=True)
    p.add_argument("--fps", type=float, default=None)
    p.add_argument("--parallel", type=int, default=None,
                   help="worker processes (default: config)")

    p = add("eval", "score an estimate CSV against a reference CSV",
            out_required=False)
    p.add_argument("--estimate", metavar="CSV", required=True)
    p.add_argument("--reference", metavar="CSV", required=True)
    p.add_argument("--kind", required=True, choices=("eda", "hr", "br"))

    p = add("report", "tables and plots from a sweep result")
    p.add_argument("--grid", metavar="PATH", required=True,
                   help="grid.csv or the sweep output directory")
    p.add_argument("--sessions", metavar="DIR", nargs="*", default=[],
                   help="session directories for trend overlays")
    p.add_argument("--fps", type=float, default=None)
    return parser


def _load_bundle(path: str, fps: float | None) -> tvio.SessionBundle:
    return tvio.load_session(path, fps=fps)


def _cmd_synth(args, cfg: tvconfig.RunConfig) -> int:
    seed = cfg.seed if args.seed is None else args.seed
    spec = synthetic.SyntheticSpec(duration_s=args.duration, fps=args.fps,
                                   seed=seed)
    spec = replace(spec, eda=replace(spec.eda, polarity=args.polarity))
    session = synthetic.gen_session(spec)

    sid = os.path.basename(os.path.normpath(args.out)) or "synthetic"
    meta = SessionMeta(session_id=sid)
    n = len(session.references["eda"].values)
    trend_times = np.arange(n) / args.fps
    references = {}
    for name in ("PEDA", "PP", "PP_NR"):
        references[name] = tvio.ReferenceSeries(
            name=name, units=tvio.REFERENCE_UNITS[name],
            values=session.references["eda"].values,
            times=trend_times, uniform=True)
    for name, key in (("HR", "hr_bpm"), ("BR", "br_bpm")):
        ref = session.references[key]
        references[name] = tvio.ReferenceSeries(
            name=name, units=tvio.REFERENCE_UNITS[name], values=ref.values,
            times=np.arange(len(ref.values)) / ref.rate_hz, uniform=True)

    frames = landmarks = None
    if args.frames:
        frames, landmarks = synthetic.render_frames(session.traces, seed=seed)
    tvio.write_session(args.out, meta, frames=frames, landmarks=landmarks,
                       traces=session.traces, references=references)
    tvconfig.write_provenance(args.out, cfg, seed=seed)
    log.info("synthetic session %s written to %s", sid, args.out)
    return 0


def _cmd_extract(args, cfg: tvconfig.RunConfig) -> int:
    bundle = _load_bundle(args.session, args.fps)
    if bundle.frames is None:
        raise InputError(f"{args.session}: no frames to extract from")
    traces = pipeline.traces_from_frames(bundle, cfg)
    os.makedirs(args.out, exist_ok=True)
    tvio.write_meta(os.path.join(args.out, "meta.json"), bundle.meta,
                    fps=bundle.frames.fps)
    tvio.write_traces(os.path.join(args.out, "traces.csv"), traces)
    tvconfig.write_provenance(args.out, cfg)
    return 0


def _cmd_eda(args, cfg: tvconfig.RunConfig) -> int:
    bundle = _load_bundle(args.session, args.fps)
    traces = pipeline.prepare_traces(bundle, cfg)
    est = pipeline.eda_trend(traces, RoiKind(args.roi),
                             EdaMethod(args.method), cfg)
    os.makedirs(args.out, exist_ok=True)
    tvio.write_estimate(
        os.path.join(args.out, f"eda_{args.roi}_{args.method}.csv"), est)
    tvconfig.write_provenance(args.out, cfg)
    return 0


def _cmd_rate(args, cfg: tvconfig.RunConfig, which: str) -> int:
    bundle = _load_bundle(args.session, args.fps)
    traces = pipeline.prepare_traces(bundle, cfg)
    fn = pipeline.heart_rate if which == "hr" else pipeline.breathing_rate
    est = fn(traces, cfg)
    os.makedirs(args.out, exist_ok=True)
    tvio.write_estimate(os.path.join(args.out, f"{which}.csv"), est)
    tvconfig.write_provenance(args.out, cfg)
    return 0


def _cmd_sweep(args, cfg: tvconfig.RunConfig) -> int:
    bundles = [_load_bundle(p, args.fps) for p in args.sessions]
    result = sweep.run_sweep(bundles, cfg, parallel=args.parallel)
    os.makedirs(args.out, exist_ok=True)
    sweep.write_grid_csv(os.path.join(args.out, "grid.csv"), result)
    sweep.write_summary_json(os.path.join(args.out, "summary.json"), result)
    tvconfig.write_provenance(args.out, cfg)
    n_fail = sum(1 for c in result.cells if not c.ok)
    log.info("sweep: %d cells, %d failed", len(result.cells), n_fail)
    return 0


_EVAL_KIND = {
    "eda": SignalKind.EDA_TREND,
    "hr": SignalKind.HEART_RATE,
    "br": SignalKind.BREATHING_RATE,
}


def _cmd_eval(args, cfg: tvconfig.RunConfig) -> int:
    est = tvio.load_estimate(args.estimate, _EVAL_KIND[args.kind])
    stem = os.path.splitext(os.path.basename(args.reference))[0]
    ref = tvio.load_reference(args.reference, stem,
                              units=tvio.REFERENCE_UNITS.get(stem, ""))
    if args.kind == "eda":
        rep = pipeline.evaluate_eda(est, ref)
        lines = {
            "pcc_abs": rep.pcc_abs, "pcc_signed": rep.pcc_signed,
            "spearman": rep.spearman, "r_max": rep.r_max,
            "tau_star_s": rep.tau_star_s,
            "trend_agreement_pct": rep.trend_agreement_pct,
            "polarity": rep.polarity.value, "n_overlap": rep.n_overlap,
        }
    else:
        ra = pipeline.evaluate_rate(est, ref)
        lines = {
            "mae_bpm": ra.mae, "rmse_bpm": ra.rmse, "pcc": ra.pcc,
            "bias_bpm": ra.bias, "n_valid": ra.n_valid,
            "coverage": ra.coverage,
        }
    for key, value in lines.items():
        print(f"{key} = {value!r}" if isinstance(value, str)
              else f"{key} = {value}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(lines, fh, indent=2, sort_keys=True)
            fh.write("\n")
        tvconfig.write_provenance(args.out, cfg)
    return 0


def _cmd_report(args, cfg: tvconfig.RunConfig) -> int:
    grid_path = args.grid
    if os.path.isdir(grid_path):
        grid_path = os.path.join(grid_path, "grid.csv")
    rows = sweep.load_grid_csv(grid_path)
    if not rows:
        raise InputError(f"{grid_path}: empty grid")
    os.makedirs(args.out, exist_ok=True)
    report.write_summary_table(os.path.join(args.out, "summary_table.csv"), rows)

    references: list[str] = []
    for r in rows:
        if r["reference"] not in references:
            references.append(r["reference"])
    for ref in references:
        try:
            report.plot_heatmap(
                os.path.join(args.out, f"heatmap_{ref}.svg"), rows, ref)
            report.plot_lag_histogram(
                os.path.join(args.out, f"lag_{ref}.svg"), rows, ref)
        except InputError as exc:
            log.warning("skipping plots for %s: %s", ref, exc)

    for session_dir in args.sessions:
        bundle = _load_bundle(session_dir, args.fps)
        sid = bundle.meta.session_id
        traces = pipeline.prepare_traces(bundle, cfg)
        for ref in references:
            best = None
            for r in rows:
                if (r["session_id"] == sid and r["reference"] == ref
                        and r["status"] == "ok"
                        and (best is None or r["pcc_abs"] > best["pcc_abs"])):
                    best = r
            if best is None or ref not in bundle.references:
                continue
            est = pipeline.eda_trend(traces, RoiKind(best["roi"]),
                                     EdaMethod(best["method"]), cfg)
            label = f"{sid} {best['roi']}/{best['method']}"
            report.plot_trend_overlay(
                os.path.join(args.out, f"overlay_{sid}_{ref}.svg"),
                est, bundle.references[ref], label)
    tvconfig.write_provenance(args.out, cfg)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage error (1) or --help (0)
        code = exc.code
        return code if isinstance(code, int) else 1

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = tvconfig.load_config(args.config)
        if args.command == "synth":
            return _cmd_synth(args, cfg)
        if args.command == "extract":
            return _cmd_extract(args, cfg)
        if args.command == "eda":
            return _cmd_eda(args, cfg)
        if args.command in ("hr", "br"):
            return _cmd_rate(args, cfg, args.command)
        if args.command == "sweep":
            return _cmd_sweep(args, cfg)
        if args.command == "eval":
            return _cmd_eval(args, cfg)
        if args.command == "report":
            return _cmd_report(args, cfg)
        raise InputError(f"unknown command {args.command!r}")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ThermovitalsError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
