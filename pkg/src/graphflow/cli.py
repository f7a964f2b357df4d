"""Command line entry point: ``graphflow simulate | verify | plot``.

Exit codes: 0 all requested checks pass, 1 configuration or input error,
2 at least one check failed, 3 the flow stopped on the spacelike guard or a
numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .diagnostics import RECORD_COLUMNS
from .errors import CheckpointFormatError, ConfigError, DataError, GraphFlowError, NotSpacelikeError

log = logging.getLogger("graphflow")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_GUARD = 0, 1, 2, 3
SERIES_FORMAT = "# series-format 1"
ABNORMAL = ("spacelike-guard", "numeric-failure")


# -- series files --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return "%.17g" % float(v)


class SeriesWriter:
    """Streams monitor records to CSV (UTF-8, LF line endings)."""

    def __init__(self, path, keep_before=None):
        self.path = Path(path)
        kept = []
        if keep_before is not None and self.path.exists():
            s = read_series(self.path)
            kept = [i for i, t in enumerate(s["t"]) if t < keep_before]
            rows = [[s[c][i] for c in RECORD_COLUMNS] for i in kept]
        self.fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self.fh.write(SERIES_FORMAT + "\n")
        self.fh.write(",".join(RECORD_COLUMNS) + "\n")
        if kept:
            for r in rows:
                self.fh.write(",".join(_fmt(v) for v in r) + "\n")

    def write(self, rec):
        self.fh.write(",".join(_fmt(v) for v in rec.row()) + "\n")
        self.fh.flush()

    def close(self, termination=None, message=""):
        if termination is not None:
            self.fh.write(f"# termination={termination}" + (f" {message}" if message else "") + "\n")
        self.fh.close()


def read_series(path):
    """Parse a series CSV into column arrays; raises DataError when malformed."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read series ({exc})") from exc
    lines = text.split("\n")
    if not lines or lines[0].strip() != SERIES_FORMAT:
        raise DataError(f"{path}: missing '{SERIES_FORMAT}' header line")
    if len(lines) < 2 or lines[1].strip().split(",") != list(RECORD_COLUMNS):
        raise DataError(f"{path}: column header does not match {','.join(RECORD_COLUMNS)}")
    data = {c: [] for c in RECORD_COLUMNS}
    termination = None
    for no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("# termination="):
                termination = line[len("# termination="):].split(" ", 1)[0]
            continue
        parts = line.split(",")
        if len(parts) != len(RECORD_COLUMNS):
            raise DataError(f"{path}:{no}: expected {len(RECORD_COLUMNS)} fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{path}:{no}: {exc}") from exc
        for c, v in zip(RECORD_COLUMNS, vals):
            data[c].append(v)
    out = {c: np.array(v) for c, v in data.items()}
    out["termination"] = termination
    return out


# -- plots ---------------------------------------------------------------------------------

def emit_plots(series_path, out_dir):
    """Decay plot (max cosh θ − 1 and ‖B‖, log scale) and volume against the volume-law bound."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    s = read_series(series_path)
    if len(s["t"]) < 2:
        raise DataError(f"{series_path}: need at least 2 rows to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = s["t"]
    floor = np.finfo(float).eps
    tripped = s["termination"] in ABNORMAL

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(t, np.maximum(s["max_cosh_theta"] - 1.0, floor), label="max cosh θ − 1")
    ax.semilogy(t, np.maximum(np.sqrt(np.maximum(s["max_B2"], 0.0)), floor), label="max ‖B‖")
    ax.set_xlabel("t")
    ax.set_title("decay")
    if tripped:
        ax.axvline(t[-1], color="red", ls="--")
        ax.annotate(f"{s['termination']} at t={t[-1]:.4g}", (t[-1], 0.5), xycoords=("data", "axes fraction"),
                    ha="right", color="red")
    ax.legend()
    fig.tight_layout()
    decay = out / "decay.png"
    fig.savefig(decay, dpi=110)
    plt.close(fig)

    # V(t) ≤ V(0)·exp(∫ sup‖H‖² dt), trapezoid over the monitored samples
    supH2 = s["sup_H"] ** 2
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (supH2[1:] + supH2[:-1]))])
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    a1.plot(t, s["volume"], label="Vol(M_t)")
    a1.plot(t, s["volume"][0] * np.exp(integral), ls="--", label="Vol(M_0)·exp∫sup‖H‖²")
    a1.legend()
    a1.set_title("volume")
    a2.semilogy(t, np.maximum(s["volume_law_residual"], floor), label="volume-law residual")
    a2.set_xlabel("t")
    a2.legend()
    if tripped:
        for a in (a1, a2):
            a.axvline(t[-1], color="red", ls="--")
    fig.tight_layout()
    vol = out / "volume.png"
    fig.savefig(vol, dpi=110)
    plt.close(fig)
    return [decay, vol]


# -- commands ------------------------------------------------------------------------------

def _thread_limit():
    raw = os.environ.get("GRAPHFLOW_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        log.warning("ignoring GRAPHFLOW_THREADS=%r (not a positive integer)", raw)
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n", encoding="utf-8")


def _json_num(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def cmd_simulate(args):
    from .checks import evaluate_checks
    from .config import load_scenario
    from .flow import checkpoint_load, checkpoint_save, run

    try:
        sc = load_scenario(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    flow = sc.flow
    if args.checkpoint_every is not None:
        if args.checkpoint_every < 0:
            print("configuration error: --checkpoint-every must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        flow = replace(flow, checkpoint_stride=args.checkpoint_every)
    out = Path(args.out or sc.output or "out")
    out.mkdir(parents=True, exist_ok=True)

    resume_meta = None
    try:
        if args.resume:
            state, resume_meta = checkpoint_load(args.resume, with_meta=True)
            if state.grid.descriptor() != sc.grid.descriptor() or state.space != sc.space:
                print("configuration error: checkpoint grid or factors do not match the scenario",
                      file=sys.stderr)
                return EXIT_CONFIG
        else:
            state = sc.initial_state()
            kin = state.kinematics()
            if not np.all(kin.margin > flow.guard_margin):
                raise NotSpacelikeError(f"initial map is not spacelike: min margin {kin.min_margin:.6g} "
                                        f"<= guard {flow.guard_margin:g}")
    except (ConfigError, NotSpacelikeError, CheckpointFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphFlowError as exc:
        print(f"configuration error: initial state rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    series = out / "series.csv"
    writer = SeriesWriter(series, keep_before=state.t if args.resume else None)
    ckpt = (out / "checkpoint.gfc", flow.checkpoint_stride) if flow.checkpoint_stride else None
    with _thread_limit():
        tr = run(state, flow, checkpoint=ckpt, resume_meta=resume_meta, on_record=writer.write)
    writer.close(tr.termination, tr.message)
    checkpoint_save(tr.final, out / "final.gfc", meta=tr.meta)

    verdicts = [] if tr.termination in ABNORMAL else evaluate_checks(sc, tr)
    if tr.termination in ABNORMAL:
        code = EXIT_GUARD
    elif any(v.status == "fail" for v in verdicts):
        code = EXIT_CHECK
    else:
        code = EXIT_OK
    report = {
        "scenario": sc.name,
        "termination": tr.termination,
        "message": tr.message,
        "t_final": _json_num(tr.final.t),
        "steps": int(tr.final.step),
        "records": len(tr.records),
        "checks": [v.as_dict() for v in verdicts],
        "exit_code": code,
    }
    _write_json(out / "verdict.json", report)
    if args.plots and len(tr.records) >= 2:
        emit_plots(series, out)
    print(f"{sc.name}: {tr.termination} at t={tr.final.t:.6g} after {tr.final.step} steps")
    for v in verdicts:
        print(f"  {v.name}: {v.status}" + (f" ({v.note})" if v.note else ""))
    return code


def cmd_verify(args):
    from .suites import SuiteContext, resolve_suite, run_suite

    try:
        resolve_suite(args.suite)
    except KeyError as exc:
        print(f"configuration error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _thread_limit():
        results = run_suite(args.suite, SuiteContext(), report=lambda r: print(r.line(), flush=True))
    _write_json(out / "verdicts.json", {"suite": args.suite, "results": [r.as_dict() for r in results],
                                        "all_passed": all(r.passed for r in results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_plot(args):
    try:
        files = emit_plots(args.series, args.out)
    except DataError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="graphflow", description="Mean curvature flow of spacelike graphs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario file")
    s.add_argument("--config", required=True, help="scenario TOML file")
    s.add_argument("--out", help="output directory (default: the scenario's output entry, else ./out)")
    s.add_argument("--resume", help="continue from a checkpoint written by an earlier run")
    s.add_argument("--checkpoint-every", type=int, help="write out/checkpoint.gfc every N steps")
    s.add_argument("--plots", action="store_true", help="also write decay and volume plots")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("--suite", required=True, help="acceptance, static, flows, a criterion id or a comma list")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="plot a series CSV")
    pl.add_argument("--series", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; usage errors are configuration errors here
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
