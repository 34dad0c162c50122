"""Command-line entry point: ``tinyad <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 memory budget violation.
"""

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from tinyad import __version__
from tinyad.audit import KB, activation_memory, audit_model
from tinyad.errors import BudgetError, TinyADError
from tinyad.features.matrix import build_feature_matrix
from tinyad.latsim import REPORTED_LATENCY, FlashModel, profile_model, savings, simulate, uniform_profile
from tinyad.modelio import parse_model
from tinyad.pipeline import FeatureGeometry, detect, evaluate, load_csv, select_threshold
from tinyad.scheduler import ArenaModel, ExecMode, execute, plan_patches
from tinyad.scheduler.patches import last_producer
from tinyad.tensor import Tensor

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3

log = logging.getLogger("tinyad")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _mode(args, kind=None):
    return ExecMode.parse(kind or args.mode, args.patches)


# ---------------------------------------------------------------- reports

def _emit(args, report, text):
    if not args.no_timestamp:
        report = {"generated": datetime.now(timezone.utc).isoformat(timespec="seconds"), **report}
    body = json.dumps(report, indent=2, sort_keys=True, default=_jsonable)
    if args.json == "-":
        print(body)
    else:
        print(text)
        if args.json:
            Path(args.json).write_text(body + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (tuple, set)):
        return list(obj)
    return str(obj)


def _fig_path(args, name):
    if not args.fig_dir:
        return None
    d = Path(args.fig_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _kb(nbytes):
    return f"{nbytes / KB:.2f} kB"


# ---------------------------------------------------------------- subcommands

def cmd_features(args):
    ds = load_csv(args.data)
    end = len(ds) if args.end is None else args.end
    if not 0 < end <= len(ds):
        raise UsageError(f"--end {end} is outside the series (1..{len(ds)})")
    fm = build_feature_matrix(ds.values[:end], args.window, args.subwindow, args.stride, args.domains)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature"] + [f"col{j}" for j in range(fm.columns)])
            for name, row in zip(fm.names, fm.values):
                w.writerow([name] + [repr(float(v)) for v in row])
    report = {"window": fm.window, "subwindow": fm.subwindow, "stride": fm.stride,
              "shape": list(fm.values.shape), "names": fm.names, "values": fm.values,
              "guarded_columns": np.flatnonzero(fm.flags)}
    lines = [f"feature matrix {fm.values.shape[0]} x {fm.columns} (window {fm.window}, "
             f"subwindow {fm.subwindow}, stride {fm.stride})"]
    for name, row in zip(fm.names, fm.values):
        lines.append(f"  {name:<10}" + " ".join(f"{v:>11.4g}" for v in row[:6]) + (" ..." if fm.columns > 6 else ""))
    if fm.flags.any():
        lines.append(f"guarded columns: {np.flatnonzero(fm.flags).tolist()}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_plan(args):
    model = parse_model(args.model)
    mode = _mode(args)
    lines = []
    report = {"mode": str(mode)}
    if last_producer(model) is not None and args.patches > 1:
        plan = plan_patches(model, args.patches)
        report["patches"] = {
            "m": plan.m, "axis": plan.axis, "trunk_end": plan.end,
            "output_ranges": plan.output_ranges,
            "input_fields": [r.ranges for r in plan.input_fields],
            "overlaps": plan.overlaps,
        }
        lines.append(f"patch input fields: {plan.describe()}")
        lines.append(f"trunk output ranges: {', '.join(f'[{a},{b})' for a, b in plan.output_ranges)}")
        fig = _fig_path(args, "receptive_fields.png")
        if fig:
            from tinyad.plotting import receptive_fields

            receptive_fields(plan, model.input_shape.spatial[plan.axis], fig)
            lines.append(f"figure: {fig}")
    else:
        lines.append("no patching (m = 1 or no convolution trunk)")
    mem = activation_memory(model, mode, budget=args.budget)
    report["memory"] = mem.to_dict()
    lines.append(f"mode {mem.mode}: arena peak {_kb(mem.peak_bytes)} at layer {mem.dominant_layer}, "
                 f"closed-form peak {mem.closed_form_peak_elements} elements")
    lines.append(f"{'layer':>5} {'kind':<16}{'live(kB)':>10}{'params(kB)':>12}{'temp(kB)':>10}")
    for l in mem.layers:
        lines.append(f"{l.index:>5} {l.kind:<16}{l.live_bytes / KB:>10.2f}{l.param_bytes / KB:>12.2f}"
                     f"{l.temp_bytes / KB:>10.2f}")
    code = EXIT_OK
    if not mem.within_budget:
        lines.append(f"BUDGET EXCEEDED: {mem.peak_bytes} > {args.budget} bytes, dominant layer {mem.dominant_layer}")
        code = EXIT_BUDGET
    _emit(args, report, "\n".join(lines))
    return code


def cmd_audit(args):
    model = parse_model(args.model)
    modes = args.modes or ["naive", "inplace", "patch", "tinyad"]
    audit = audit_model(model, modes, m=args.patches, budget=args.budget, f1=args.f1)
    lines = [audit.table()]
    fig = _fig_path(args, "memory_per_layer.png")
    if fig:
        from tinyad.plotting import memory_bars

        memory_bars(audit, fig)
        lines.append(f"figure: {fig}")
    code = EXIT_OK
    for name, plan in audit.plans.items():
        if not plan.within_budget:
            lines.append(f"BUDGET EXCEEDED in {name}: peak {plan.peak_bytes} > {args.budget} bytes, "
                         f"dominant layer {plan.dominant_layer} ({model.layers[plan.dominant_layer].kind})")
            code = EXIT_BUDGET
    _emit(args, audit.to_dict(), "\n".join(lines))
    return code


def _load_input(args, model):
    shape = model.input_shape
    if args.input:
        arr = np.load(args.input) if args.input.endswith(".npy") else np.loadtxt(args.input, delimiter=",", ndmin=1)
        arr = np.asarray(arr, dtype=np.float32)
        if arr.size != shape.element_count:
            raise TinyADError(f"--input {args.input} has {arr.size} values, model expects {shape}")
        return Tensor(shape, arr.reshape(shape.channels, *shape.spatial))
    rng = np.random.default_rng(args.seed)
    return Tensor(shape, rng.standard_normal((shape.channels, *shape.spatial)).astype(np.float32))


def cmd_run(args):
    model = parse_model(args.model)
    mode = _mode(args)
    x = _load_input(args, model)
    arena = ArenaModel(args.budget)
    try:
        res = execute(model, x, mode, arena=arena, source=args.model if args.stream else None)
    except BudgetError as exc:
        _emit(args, {"mode": str(mode), "error": str(exc), "layer": exc.layer_index,
                     "live_bytes": exc.live_bytes, "budget": exc.budget}, f"error: {exc}")
        return EXIT_BUDGET
    out = res.output.array.ravel()
    if args.output:
        np.savetxt(args.output, out, delimiter=",", fmt="%.9g")
    report = {
        "mode": str(mode), "output": out, "measured_peak_bytes": res.measured_peak,
        "peak_layer": arena.high_water_layer, "mac_count": res.mac_count,
        "param_peak_bytes": arena.param_high_water,
    }
    shown = ", ".join(f"{v:.6g}" for v in out[:8]) + (" ..." if out.size > 8 else "")
    text = (f"mode {mode}\noutput [{shown}]\nmeasured peak {res.measured_peak} bytes ({_kb(res.measured_peak)}) "
            f"at layer {arena.high_water_layer}\nMACs {res.mac_count}")
    _emit(args, report, text)
    return EXIT_OK


def _geometry(args):
    if args.subwindow is None:
        return None
    return FeatureGeometry(args.subwindow, args.feature_stride)


def cmd_detect(args):
    model = parse_model(args.model)
    ds = load_csv(args.data)
    mode = _mode(args)
    scores, result = detect(model, ds, mode, args.window, _geometry(args), args.error, args.workers)
    if args.scores_out:
        with open(args.scores_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "score", "label"])
            for t, s, y in zip(ds.timestamps, scores, ds.labels):
                if not np.isnan(s):
                    w.writerow([repr(float(t)), repr(float(s)), int(y)])
    summary = result.summary()
    report = {"mode": str(mode), "error": args.error, "split": ds.split_sizes, **summary,
              "predicted": result.predicted}
    text = (f"mode {mode}, split {ds.split_sizes}\nthreshold {result.threshold:.6g}\n"
            f"precision {result.precision:.4f}  recall {result.recall:.4f}  F1 {result.f1:.4f}  "
            f"alarms {summary['n_alarms']}/{summary['n_points']}")
    _emit(args, report, text)
    return EXIT_OK


def _read_scores(path):
    ts, scores, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"score", "label"} <= set(reader.fieldnames):
            raise TinyADError(f"{path}: expected columns score,label")
        for row in reader:
            ts.append(float(row.get("timestamp", len(ts))))
            scores.append(float(row["score"]))
            labels.append(int(row["label"]))
    return np.array(ts), np.array(scores), np.array(labels)


def cmd_evaluate(args):
    _, scores, labels = _read_scores(args.scores)
    if args.threshold is not None:
        tau = args.threshold
        test_s, test_y = scores, labels
    else:
        if args.validation is None:
            raise UsageError("evaluate needs --threshold or --validation")
        _, val_s, val_y = _read_scores(args.validation)
        tau = select_threshold(val_s, val_y)
        test_s, test_y = scores, labels
    result = evaluate(test_s, test_y, tau)
    text = (f"threshold {tau:.6g}\nprecision {result.precision:.4f}  recall {result.recall:.4f}  "
            f"F1 {result.f1:.4f}")
    _emit(args, result.summary(), text)
    return EXIT_OK


def cmd_simulate(args):
    flash = FlashModel(args.page_size, args.t_read, args.decode_time, args.mac_time, args.copy_time)
    if args.reported_row:
        if args.reported_row not in REPORTED_LATENCY:
            raise UsageError(f"--reported-row must be one of {sorted(REPORTED_LATENCY)}")
        pairs = [(p * 1e3, f * 1e3) for p, f in uniform_profile(args.reported_row, args.layers)]
        single, multi = simulate(pairs, 1), simulate(pairs, 2)
        report = {"note": "simulated, uniform split of a reported row", "row": args.reported_row,
                  "single_ms": single.total / 1e3, "multi_ms": multi.total / 1e3,
                  "saving": savings(single.total, multi.total)}
        label = args.reported_row
    else:
        if not args.model:
            raise UsageError("simulate needs --model or --reported-row")
        model = parse_model(args.model)
        profile = profile_model(model, _mode(args), flash, args.per_patch_reload)
        single, multi = profile.timeline(1), profile.timeline(2)
        report = profile.to_dict()
        label = profile.mode
    if args.gantt:
        with open(args.gantt, "w", encoding="utf-8") as fh:
            fh.write(multi.to_csv() if args.threads == 2 else single.to_csv())
    lines = [f"{label}: single-thread {single.total / 1e3:.2f} ms, multi-thread {multi.total / 1e3:.2f} ms "
             f"(saving {savings(single.total, multi.total):.1%}) [simulated, calibrated]"]
    if "parameter_residency" in report:
        lines.append(f"prep {report['prep_ms']:.2f} ms, fwd {report['fwd_ms']:.2f} ms, "
                     f"parameters: {report['parameter_residency']}")
    fig = _fig_path(args, "latency_gantt.png")
    if fig:
        from tinyad.plotting import gantt

        gantt({"single": single, "multi": multi}, fig)
        lines.append(f"figure: {fig}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--json", metavar="PATH", help="write the JSON report here ('-' prints JSON instead of text)")
    common.add_argument("--fig-dir", metavar="DIR", help="render figures into DIR")
    common.add_argument("--no-timestamp", action="store_true", help="omit the generation time from reports")
    common.add_argument("-v", "--verbose", action="store_true")

    model = _Parser(add_help=False)
    model.add_argument("--model", required=True, help="model JSON file")

    mode = _Parser(add_help=False)
    mode.add_argument("--mode", default="naive", choices=["naive", "inplace", "patch", "tinyad"])
    mode.add_argument("--patches", "-m", type=_positive_int, default=1, help="patch count m")
    mode.add_argument("--budget", type=_positive_int, help="SRAM budget in bytes")

    p = _Parser(prog="tinyad", description="Memory-planned CNN inference and anomaly detection toolkit.")
    p.add_argument("--version", action="version", version=f"tinyad {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("features", parents=[common], help="tri-domain feature matrix of a series window")
    s.add_argument("--data", required=True, help="timestamp,value,label CSV")
    s.add_argument("--window", type=_positive_int, help="window length (default: whole series)")
    s.add_argument("--end", type=_positive_int, help="window ends before this sample (default: series end)")
    s.add_argument("--subwindow", type=_positive_int, default=40)
    s.add_argument("--stride", type=_positive_int, default=8)
    s.add_argument("--domains", default="time,freq,wavelet")
    s.add_argument("--out", help="write the matrix as CSV")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("plan", parents=[common, model, mode], help="patch plan and memory plan")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("audit", parents=[common, model], help="MACs, model size and peak memory per mode")
    s.add_argument("--mode", dest="modes", action="append", choices=["naive", "inplace", "patch", "tinyad"],
                   help="mode to audit (repeatable; default all four)")
    s.add_argument("--patches", "-m", type=_positive_int, default=3)
    s.add_argument("--budget", type=_positive_int, help="SRAM budget in bytes")
    s.add_argument("--f1", type=float, help="F1 to print alongside (from a detect run)")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("run", parents=[common, model, mode], help="execute one inference")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--input", help="input tensor as .npy or flat CSV")
    src.add_argument("--seed", type=int, default=0, help="seed for a random input")
    s.add_argument("--stream", action="store_true", help="re-read parameters layer by layer from the model file")
    s.add_argument("--output", help="write the output tensor as CSV")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("detect", parents=[common, model, mode], help="score a series and evaluate detection")
    s.add_argument("--data", required=True, help="timestamp,value,label CSV")
    s.add_argument("--window", type=_positive_int, help="history length L")
    s.add_argument("--subwindow", type=_positive_int, help="feature sub-window (enables feature-matrix input)")
    s.add_argument("--feature-stride", type=_positive_int, default=8)
    s.add_argument("--error", choices=["abs", "squared"], default="abs")
    s.add_argument("--workers", type=_positive_int, help="parallel windows (capped by TINYAD_THREADS)")
    s.add_argument("--scores-out", help="write timestamp,score,label CSV")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("evaluate", parents=[common], help="precision/recall/F1 of a scores file")
    s.add_argument("--scores", required=True, help="score,label CSV to evaluate")
    thr = s.add_mutually_exclusive_group()
    thr.add_argument("--threshold", type=float)
    thr.add_argument("--validation", help="score,label CSV used to select the threshold")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", parents=[common, mode], help="simulated single vs multi-thread latency")
    target = s.add_mutually_exclusive_group()
    target.add_argument("--model", help="model JSON file")
    target.add_argument("--reported-row", help="uniform split of a reported latency row, e.g. SWaT(2)")
    s.add_argument("--layers", type=_positive_int, default=5, help="layer count for --reported-row")
    s.add_argument("--per-patch-reload", action="store_true", help="reload trunk parameters for every patch")
    s.add_argument("--threads", type=int, choices=[1, 2], default=2, help="timeline written by --gantt")
    s.add_argument("--gantt", help="write layer,resource,start,end CSV (ms)")
    s.add_argument("--page-size", type=_positive_int, default=8192)
    s.add_argument("--t-read", type=_positive_float, default=25.0, help="page read time (us)")
    s.add_argument("--decode-time", type=_positive_float, default=FlashModel.decode_us_per_byte,
                   help="decode time per parameter byte (us)")
    s.add_argument("--mac-time", type=_positive_float, default=FlashModel.mac_time_us, help="time per MAC (us)")
    s.add_argument("--copy-time", type=float, default=FlashModel.copy_us_per_byte,
                   help="in-place copy time per byte (us)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (TinyADError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
