"""Command-line interface: ``ftsterrain <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
3 training diverged.

Wall-clock measurements are written only to ``timing.csv`` (and
``grid_timing.csv``); every other output is a deterministic function of the
inputs and ``--seed``.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
import warnings
from pathlib import Path

from . import drawbar, mlp, report, svm, synth
from .errors import ConfigError, ConvergenceWarning, DataError, DivergenceError, FrameError, FtsTerrainError
from .metrics import accuracy, confusion_matrix
from .preprocessing import stratified_split
from .serialize import load_model, save_model
from .telemetry import Position, SensorKind, discover_streams, load_stream, read_labels
from .windows import (
    CLAMP,
    EPS_DIV,
    FeatureSelection,
    WindowSpec,
    build_samples,
    read_samples_csv,
    to_arrays,
    write_samples_csv,
)

log = logging.getLogger("ftsterrain")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Reports usage problems as exceptions so ``main`` owns the exit code."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _tolerances(text: str) -> tuple:
    try:
        vals = tuple(float(v) / 100.0 for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated centimetres, got {text!r}") from None
    if not vals or min(vals) < 0:
        raise argparse.ArgumentTypeError("tolerances must be non-negative")
    return vals


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ftsterrain", description="Terrain classification and lever-arm analysis "
                                                 "for rover wheel force-torque and IMU telemetry.")
    p.add_argument("--config", metavar="FILE",
                   help="key = value file with defaults for any long option (dashes or underscores); "
                        "flags given on the command line win")
    p.add_argument("--seed", type=int, default=42, help="seed for splits, training and synthesis (default 42)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for the SVM grid search")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="write a synthetic scenario (sensor CSVs, labels.csv, truth.json)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--scenario", metavar="FILE", help="scenario key = value file (segments, rates, ...)")
    s.add_argument("--per-class", type=float, default=120.0, help="seconds per terrain when no scenario file is given")
    s.add_argument("--noise-scale", type=float, help="multiplier on all noise sigmas (0 = noiseless)")
    s.add_argument("--lever-length", type=float, help="embedded lever length [m] (default 0.14)")

    e = sub.add_parser("extract", help="window the streams and write a samples CSV")
    e.add_argument("inputs", nargs="+", help="sensor CSV files (imu.csv, fts_fl.csv, ...) or directories")
    e.add_argument("--labels", help="label intervals CSV (t_start,t_end,terrain)")
    e.add_argument("--variant", choices=("imu", "fts", "all"), default="all", help="sensor selection")
    e.add_argument("--no-fx-over-tz", action="store_true", help="omit the derived fx/tz channel")
    e.add_argument("--window", type=float, default=1.0, help="window length [s]")
    e.add_argument("--stride", type=float, default=1.0, help="window stride [s]")
    e.add_argument("--out", required=True, help="samples CSV to write")

    t = sub.add_parser("train", help="train an SVM (with grid search) or MLP on a samples CSV")
    t.add_argument("samples", help="samples CSV from 'extract'")
    t.add_argument("--model", choices=("svm", "mlp"), default="svm")
    t.add_argument("--variant", choices=("imu", "fts", "all"), default="all", help="feature columns to use")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--test-fraction", type=float, default=0.25)
    t.add_argument("--reduction", choices=("ovr", "ovo"), default="ovr", help="SVM multiclass reduction")
    t.add_argument("--tol", type=float, default=1e-3, help="SVM KKT tolerance")
    t.add_argument("--hidden-layers", type=_positive_int, default=2, help="MLP hidden layers of 64 units")
    t.add_argument("--epochs", type=_positive_int, default=50)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--batch-size", type=_positive_int, default=32)

    v = sub.add_parser("evaluate", help="apply a saved model to a labeled samples CSV")
    v.add_argument("model", help="model.json from 'train'")
    v.add_argument("samples", help="samples CSV")
    v.add_argument("--out", required=True, help="output directory")

    d = sub.add_parser("drawbar", help="lever-length filtering, retention table and stable intervals")
    d.add_argument("inputs", nargs="+", help="FTS CSV files or directories")
    d.add_argument("--tolerances", type=_tolerances, default=(0.05, 0.02, 0.01),
                   help="band widening in cm, comma-separated (default 5,2,1)")
    d.add_argument("--sensor-to-axle", type=float, default=0.10, help="[m]")
    d.add_argument("--wheel-diameter", type=float, default=0.15, help="[m]")
    d.add_argument("--eps-force", type=float, default=drawbar.EPS_FORCE, help="|fx| below which L is undefined [N]")
    d.add_argument("--min-abs-fx", type=float, help="also reject points with smaller |fx| [N]")
    d.add_argument("--min-duration", type=float, default=5.0, help="shortest stable interval [s]")
    d.add_argument("--max-std", type=float, default=0.01, help="largest rolling std of L in a stable interval [m]")
    d.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("report", help="re-render text tables and SVG charts from CSV outputs")
    r.add_argument("directory", help="directory searched recursively for confusion/retention/learning-curve CSVs")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> None:
    """Turn ``--config`` entries into parser defaults before the real parse."""
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read_string("[config]\n" + path.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    section = cp["config"]
    values = {k.replace("-", "_"): k for k in section}

    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    parsers = [parser] + list(subparsers.choices.values())
    claimed = set()
    for sp in parsers:
        dests = {a.dest: a for a in sp._actions}
        hits = {}
        for k, raw in values.items():
            a = dests.get(k)
            if a is None or k in ("help", "config", "command"):
                continue
            if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                try:
                    hits[k] = section.getboolean(raw)
                except ValueError:
                    raise ConfigError(f"{path}: {raw} must be true or false") from None
            else:
                hits[k] = section[raw]
            claimed.add(k)
        sp.set_defaults(**hits)
    unknown = sorted(set(values) - claimed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_synth(args) -> int:
    if args.scenario:
        sc = Path(args.scenario)
        if not sc.is_file():
            raise DataError(f"scenario file not found: {sc}")
        spec = synth.parse_scenario(sc.read_text(encoding="utf-8"), seed=args.seed,
                                    noise_scale=args.noise_scale, lever_length=args.lever_length)
    else:
        kw = {k: v for k, v in (("noise_scale", args.noise_scale), ("lever_length", args.lever_length)) if v is not None}
        spec = synth.default_scenario(args.per_class, seed=args.seed, **kw)
    written = synth.write_scenario(synth.generate(spec), _out_dir(args.out))
    log.info("wrote %d files to %s", len(written), args.out)
    return EXIT_OK


def _load_streams(inputs, kind=None) -> list:
    paths = discover_streams(inputs)
    streams = [load_stream(p, name) for name, p in sorted(paths.items())]
    if kind is not None:
        streams = [s for s in streams if s.sensor.kind is kind]
    if not streams:
        raise DataError(f"no sensor CSVs found in {list(map(str, inputs))}")
    return streams


def cmd_extract(args) -> int:
    labels = None
    if args.labels:
        lp = Path(args.labels)
        if not lp.is_file():
            raise DataError(f"label file not found: {lp}")
        labels = read_labels(lp)
    sel = FeatureSelection.from_variant(args.variant, derived=not args.no_fx_over_tz)
    streams = _load_streams(args.inputs)
    samples = build_samples(streams, labels, WindowSpec(args.window, args.stride), sel)
    if not samples:
        raise DataError("no window contains data from every selected stream")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples_csv(samples, out)
    log.info("%d samples x %d features -> %s", len(samples), len(samples[0].features), out)
    return EXIT_OK


def _load_samples(path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"samples file not found: {p}")
    return read_samples_csv(p)


def _emit_confusion(out: Path, rep: report.EvalReport) -> None:
    text, csv_text = report.render_confusion(rep)
    _write(out / "confusion.csv", csv_text)
    _write(out / "confusion.txt", text)


def cmd_train(args) -> int:
    X, y, names = to_arrays(_load_samples(args.samples), args.variant)
    if y.size == 0:
        raise DataError(f"{args.samples} has no labeled samples")
    out = _out_dir(args.out)
    tr, te = stratified_split(y, args.test_fraction, args.seed)
    meta = {"model": args.model, "features": names, "variant": args.variant, "seed": args.seed, "test_fraction": args.test_fraction,
            "fx_over_tz_guard": {"eps_div": EPS_DIV, "clamp": CLAMP}}
    timing = {}

    if args.model == "svm":
        base = svm.SvmConfig(tol=args.tol, reduction=args.reduction)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            grid = svm.grid_search(X, y, base=base, split=(tr, te), jobs=args.jobs)
        grid_s = time.perf_counter() - t0
        _write(out / "grid.csv", report.grid_csv(grid.rows))
        _write(out / "grid_timing.csv", report.grid_timing_csv(grid.rows))
        t0 = time.perf_counter()
        model = svm.train_multiclass(X[tr], y[tr], grid.best)
        train_s = time.perf_counter() - t0
        k = grid.best.kernel
        meta["best"] = {"kernel": k.kind.value, "C": grid.best.C, "gamma": k.gamma}
    else:
        cfg = mlp.MlpConfig(input_dim=X.shape[1], output_dim=len(set(y)), epochs=args.epochs,
                            hidden=(64,) * args.hidden_layers, learning_rate=args.learning_rate, momentum=args.momentum,
                            batch_size=args.batch_size, seed=args.seed)
        grid_s = None
        t0 = time.perf_counter()
        model, curves = mlp.train(X[tr], y[tr], cfg, X[te], y[te])
        train_s = time.perf_counter() - t0
        _write(out / "learning_curve.csv", report.learning_curve_csv(curves))
        _write(out / "learning_curve.svg", report.learning_curve_svg(curves))

    t0 = time.perf_counter()
    pred = model.predict(X[te])
    infer_s = time.perf_counter() - t0
    train_acc = accuracy(model.predict(X[tr]), y[tr])
    t = report.Timing(grid_s, train_s, infer_s, int(te.size))
    timing[args.model] = t
    rep = report.EvalReport.from_confusion(confusion_matrix(pred, y[te]), train_acc)
    _emit_confusion(out, rep)
    save_model(model, out / "model.json", meta)
    _write(out / "timing.csv", report.timing_csv(timing))
    log.info("%s/%s test accuracy %s %%", args.model, args.variant, report.fmt2(rep.test_accuracy))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model, meta = load_model(args.model, with_meta=True)
    samples = _load_samples(args.samples)
    names = meta.get("features")
    if not names:
        raise DataError(f"{args.model} does not record its feature columns")
    X_all, y, all_names = to_arrays(samples, "all")
    missing = sorted(set(names) - set(all_names))
    if missing:
        raise DataError(f"samples lack {len(missing)} model features, e.g. {missing[0]}")
    col = {n: i for i, n in enumerate(all_names)}
    X = X_all[:, [col[n] for n in names]]
    if y.size == 0:
        raise DataError(f"{args.samples} has no labeled samples")
    out = _out_dir(args.out)
    t0 = time.perf_counter()
    pred = model.predict(X)
    infer_s = time.perf_counter() - t0
    rep = report.EvalReport.from_confusion(confusion_matrix(pred, y, classes=tuple(model.classes)))
    _emit_confusion(out, rep)
    labeled = [s for s in samples if s.label is not None]
    rows = [["t_start", "label", "predicted"]] + [[repr(s.t_start), s.label.value, p] for s, p in zip(labeled, pred)]
    _write(out / "predictions.csv", report._csv_text(rows))
    _write(out / "timing.csv", report.timing_csv({meta.get("model", "model"): report.Timing(
        inference_s=infer_s, n_test=int(y.size))}))
    return EXIT_OK


def cmd_drawbar(args) -> int:
    streams = _load_streams(args.inputs, SensorKind.FTS)
    geom = drawbar.WheelGeometry(args.sensor_to_axle, args.wheel_diameter)
    out = _out_dir(args.out)
    series = {s.sensor.position: drawbar.lever_series(s, args.eps_force) for s in streams}
    reports = drawbar.retention_report(series, geom, args.tolerances, args.min_abs_fx)
    _write(out / "retention.csv", report.retention_csv(reports))
    _write(out / "retention.txt", report.retention_text(reports))

    # per-point validity and the stability analysis use the widest tolerance
    tol = max(args.tolerances)
    estimates = {}
    filtered = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for pos in sorted(series, key=lambda p: list(Position).index(p)):
            f = drawbar.filter_by_lever(series[pos], geom, tol, args.min_abs_fx)
            filtered[pos] = f
            tag = pos.value
            _write(out / f"lever_{tag}.csv", report.lever_series_csv(f))
            valid_csv, invalid_csv = report.scatter_csvs(f)
            _write(out / f"scatter_{tag}_valid.csv", valid_csv)
            _write(out / f"scatter_{tag}_invalid.csv", invalid_csv)
            intervals = drawbar.detect_stable_intervals(f, args.min_duration, args.max_std)
            estimates[pos] = drawbar.drawbar_estimate(f, intervals)
    _write(out / "stable_intervals.csv", report.stable_intervals_csv(estimates))
    _write(out / "lever.svg", report.lever_svg(filtered))
    return EXIT_OK


def cmd_report(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        raise DataError(f"report directory not found: {root}")
    n = 0
    for p in sorted(root.rglob("confusion.csv")):
        _write(p.with_suffix(".txt"), report.confusion_text(report.parse_confusion_csv(p.read_text(encoding="utf-8"))))
        n += 1
    for p in sorted(root.rglob("retention.csv")):
        _write(p.with_suffix(".txt"), report.retention_text(report.parse_retention_csv(p.read_text(encoding="utf-8"))))
        n += 1
    for p in sorted(root.rglob("learning_curve.csv")):
        _write(p.with_suffix(".svg"), report.learning_curve_svg(_read_curves(p)))
        n += 1
    if n == 0:
        raise DataError(f"no confusion, retention or learning-curve CSVs under {root}")
    return EXIT_OK


def _read_curves(path: Path) -> list:
    import csv

    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))

    def f(v):
        return float(v) if v != "" else None

    return [mlp.EpochStats(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]),
                           f(r["test_loss"]), f(r["test_acc"])) for r in rows]


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "drawbar": cmd_drawbar,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"ftsterrain: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"ftsterrain: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FrameError, OSError) as exc:
        print(f"ftsterrain: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FtsTerrainError as exc:
        print(f"ftsterrain: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
