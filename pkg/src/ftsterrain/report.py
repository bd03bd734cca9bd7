"""Plain-text and CSV rendering of evaluation results.

Percentages are printed with two decimals, rounded half away from zero from
the shortest decimal representation of each float (so 33.335 prints as
33.34). Cells are rounded independently: a row of thirds prints as
33.33/33.33/33.33 and is not rebalanced to sum to 100.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Optional

import numpy as np

from .errors import DataError, ParseError
from .metrics import Confusion
from .preprocessing import canonical_classes
from .telemetry import WHEELS

_CENT = Decimal("0.01")
RETENTION_NOTE = ("Remaining [%] of all FTS samples; the denominator includes samples "
                  "whose lever length is undefined (|fx| below the force threshold).")


def fmt2(x) -> str:
    """Two-decimal string, half away from zero."""
    x = float(x)
    if not math.isfinite(x):
        raise DataError(f"cannot format non-finite value {x!r}")
    d = Decimal(repr(x)).quantize(_CENT, rounding=ROUND_HALF_UP)
    return "0.00" if d == 0 else str(d)


def _fmt_or_blank(x) -> str:
    return "" if x is None else fmt2(x)


def _num(x) -> str:
    """Compact exact number for parameters (0.1, 100, 0.001)."""
    return repr(float(x)).rstrip("0").rstrip(".") if float(x) != int(x) else str(int(x))


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


@dataclass(frozen=True)
class Timing:
    grid_search_s: Optional[float] = None
    train_best_s: Optional[float] = None
    inference_s: Optional[float] = None  # whole test set
    n_test: Optional[int] = None

    @property
    def inference_per_sample_s(self) -> Optional[float]:
        if self.inference_s is None or not self.n_test:
            return None
        return self.inference_s / self.n_test


@dataclass(frozen=True)
class EvalReport:
    """Row-normalized confusion matrix (percent) with overall accuracies (percent).

    Every row with any mass must sum to 100 within ``row_tol``; rows of
    classes absent from the test set are all zero. ``row_tol=None`` skips the
    row check (for transcribed tables that do not add up).
    """

    classes: tuple
    percent: np.ndarray
    train_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None
    timing: Optional[Timing] = None
    row_tol: Optional[float] = 1e-6

    def __post_init__(self):
        P = np.asarray(self.percent, dtype=np.float64)
        k = len(self.classes)
        if P.shape != (k, k):
            raise DataError(f"confusion matrix shape {P.shape} does not match {k} classes")
        if not np.all(np.isfinite(P)) or P.min(initial=0.0) < 0:
            raise DataError("confusion percentages must be finite and non-negative")
        if self.row_tol is not None:
            sums = P.sum(axis=1)
            bad = [c for c, s in zip(self.classes, sums) if s != 0 and abs(s - 100.0) > self.row_tol]
            if bad:
                raise DataError(f"rows {bad} do not sum to 100 %")
        for name in ("train_accuracy", "test_accuracy"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0:
                raise DataError(f"{name} {v} outside [0, 100]")
        # canonical row order: Loose, Compressed, Pebbles, Rock, then others
        order = [self.classes.index(c) for c in canonical_classes(self.classes)]
        object.__setattr__(self, "classes", tuple(self.classes[i] for i in order))
        object.__setattr__(self, "percent", P[np.ix_(order, order)])

    @property
    def per_class_accuracy(self) -> dict:
        return {c: float(self.percent[i, i]) for i, c in enumerate(self.classes)}

    @classmethod
    def from_confusion(cls, conf: Confusion, train_accuracy: Optional[float] = None,
                       timing: Optional[Timing] = None) -> "EvalReport":
        """``train_accuracy`` is a fraction, like :attr:`Confusion.accuracy`."""
        tr = None if train_accuracy is None else 100.0 * train_accuracy
        return cls(tuple(conf.classes), conf.percent, tr, 100.0 * conf.accuracy, timing)


def _title(c: str) -> str:
    return c[:1].upper() + c[1:]


def confusion_csv(report: EvalReport) -> str:
    rows = [["actual"] + list(report.classes)]
    for c, r in zip(report.classes, report.percent):
        rows.append([c] + [fmt2(v) for v in r])
    rows.append(["train_accuracy", _fmt_or_blank(report.train_accuracy)])
    rows.append(["test_accuracy", _fmt_or_blank(report.test_accuracy)])
    return _csv_text(rows)


def confusion_text(report: EvalReport) -> str:
    names = [_title(c) for c in report.classes]
    cells = [[fmt2(v) for v in r] for r in report.percent]
    w0 = max(len("Actual"), *(len(n) for n in names))
    widths = [max(len(n), *(len(r[j]) for r in cells)) for j, n in enumerate(names)]
    header = "Actual".ljust(w0) + "".join("  " + n.rjust(w) for n, w in zip(names, widths))
    lines = [" " * w0 + "  Predicted", header, "-" * len(header)]
    for n, r in zip(names, cells):
        lines.append(n.ljust(w0) + "".join("  " + v.rjust(w) for v, w in zip(r, widths)))
    lines.append("-" * len(header))
    if report.train_accuracy is not None:
        lines.append(f"Training accuracy: {fmt2(report.train_accuracy)} %")
    if report.test_accuracy is not None:
        lines.append(f"Test accuracy: {fmt2(report.test_accuracy)} %")
    return "\n".join(lines) + "\n"


def render_confusion(report: EvalReport) -> tuple:
    """``(text, csv)`` renderings with rows in terrain order."""
    return confusion_text(report), confusion_csv(report)


def parse_confusion_csv(text: str) -> EvalReport:
    """Inverse of :func:`confusion_csv` (values come back rounded)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or rows[0][0] != "actual":
        raise ParseError("confusion CSV must start with an 'actual,...' header", line=1)
    classes = tuple(rows[0][1:])
    matrix = []
    acc = {}
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            if r[0] in ("train_accuracy", "test_accuracy"):
                acc[r[0]] = float(r[1]) if len(r) > 1 and r[1] != "" else None
            else:
                if len(r) != len(classes) + 1:
                    raise ParseError(f"expected {len(classes) + 1} fields, got {len(r)}", lineno, lineno - 1)
                matrix.append([float(v) for v in r[1:]])
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"not a number: {exc}", lineno, lineno - 1) from None
    if len(matrix) != len(classes):
        raise DataError(f"{len(matrix)} matrix rows for {len(classes)} classes")
    # two-decimal cells can miss 100 by up to half a cent each
    return EvalReport(classes, np.array(matrix), acc.get("train_accuracy"), acc.get("test_accuracy"),
                      row_tol=0.005 * len(classes) + 1e-9)


def grid_csv(rows) -> str:
    """Grid-search table; accuracies in percent. Fit times live in the timing file."""
    out = [["kernel", "C", "gamma", "train_accuracy", "test_accuracy", "converged"]]
    for r in rows:
        out.append([getattr(r.kernel, "value", r.kernel), _num(r.C), _num(r.gamma),
                    fmt2(100.0 * r.train_accuracy), fmt2(100.0 * r.test_accuracy), str(bool(r.converged)).lower()])
    return _csv_text(out)


def grid_timing_csv(rows) -> str:
    out = [["kernel", "C", "gamma", "fit_s"]]
    for r in rows:
        out.append([getattr(r.kernel, "value", r.kernel), _num(r.C), _num(r.gamma), repr(float(r.fit_seconds))])
    return _csv_text(out)


def timing_csv(entries: Mapping[str, Timing]) -> str:
    """Training and inference times, one row per model (missing values are N/A)."""

    def cell(v):
        return "N/A" if v is None else repr(float(v))

    out = [["model", "grid_search_s", "train_best_s", "inference_s", "inference_per_sample_s", "n_test"]]
    for name, t in entries.items():
        out.append([name, cell(t.grid_search_s), cell(t.train_best_s), cell(t.inference_s),
                    cell(t.inference_per_sample_s), "N/A" if t.n_test is None else str(t.n_test)])
    return _csv_text(out)


def learning_curve_csv(curves) -> str:
    def cell(v):
        return "" if v is None else repr(float(v))

    out = [["epoch", "train_loss", "train_acc", "test_loss", "test_acc"]]
    for s in curves:
        out.append([str(s.epoch), cell(s.train_loss), cell(s.train_acc), cell(s.test_loss), cell(s.test_acc)])
    return _csv_text(out)


def _tol_cm(tol: float) -> str:
    return _num(round(tol * 100.0, 9))


def retention_csv(reports) -> str:
    """Rows per tolerance, wheels FL..BR then the pooled total. Absent wheels are blank."""
    out = [["tolerance_cm"] + [w.value.upper() for w in WHEELS] + ["total"]]
    for r in reports:
        out.append([_tol_cm(r.tolerance)] + [_fmt_or_blank(r.per_wheel.get(w)) for w in WHEELS]
                   + [_fmt_or_blank(r.total)])
    return _csv_text(out)


def parse_retention_csv(text: str) -> list:
    """Inverse of :func:`retention_csv` (percentages come back rounded)."""
    from .drawbar import RetentionReport

    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    expected = ["tolerance_cm"] + [w.value.upper() for w in WHEELS] + ["total"]
    if not rows or rows[0] != expected:
        raise ParseError(f"retention CSV header must be {','.join(expected)}", line=1)
    out = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(expected):
            raise ParseError(f"expected {len(expected)} fields, got {len(r)}", lineno, lineno - 1)
        try:
            vals = [float(v) if v != "" else None for v in r]
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", lineno, lineno - 1) from None
        if vals[0] is None:
            raise ParseError("missing tolerance", lineno, lineno - 1)
        out.append(RetentionReport(vals[0] / 100.0, dict(zip(WHEELS, vals[1:-1])), vals[-1]))
    return out


def retention_text(reports) -> str:
    head = ["Tol [cm]"] + [w.value.upper() for w in WHEELS] + ["Total"]
    body = [[_tol_cm(r.tolerance)] + [_fmt_or_blank(r.per_wheel.get(w)) or "-" for w in WHEELS]
            + [_fmt_or_blank(r.total) or "-"] for r in reports]
    widths = [max(len(h), *(len(b[j]) for b in body)) if body else len(h) for j, h in enumerate(head)]
    lines = [RETENTION_NOTE, "  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def lever_series_csv(series) -> str:
    out = [["t", "fx", "ty", "L", "valid"]]
    for t, fx, ty, L, v in zip(series.t, series.fx, series.ty, series.L, series.valid):
        out.append([repr(float(t)), repr(float(fx)), repr(float(ty)), "" if np.isnan(L) else repr(float(L)),
                    "1" if v else "0"])
    return _csv_text(out)


def scatter_csvs(series) -> tuple:
    """``(valid, invalid)`` two-column ``fx,ty`` point sets."""

    def pts(mask):
        rows = [["fx", "ty"]]
        rows += [[repr(float(a)), repr(float(b))] for a, b in zip(series.fx[mask], series.ty[mask])]
        return _csv_text(rows)

    return pts(series.valid), pts(~series.valid)


def stable_intervals_csv(estimates_by_wheel: Mapping) -> str:
    out = [["wheel", "t_start", "t_end", "mean_fx", "std_fx", "n_points"]]
    for pos, ests in estimates_by_wheel.items():
        for e in ests:
            out.append([getattr(pos, "value", pos).upper(), repr(e.t_start), repr(e.t_end), repr(e.mean_fx),
                        repr(e.std_fx), str(e.n_points)])
    return _csv_text(out)


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def svg_line_chart(series: Mapping[str, tuple], title: str = "", xlabel: str = "", ylabel: str = "",
                   width: int = 640, height: int = 360) -> str:
    """Minimal static SVG with one polyline per ``name -> (x, y)``; NaNs break lines."""
    pad_l, pad_r, pad_t, pad_b = 60, 120, 30, 45
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()]) if series else np.zeros(0)
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()]) if series else np.zeros(0)
    ok = np.isfinite(xs) & np.isfinite(ys)
    if not ok.any():
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    else:
        x0, x1, y0, y1 = xs[ok].min(), xs[ok].max(), ys[ok].min(), ys[ok].max()
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
             f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
             f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>',
             f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
             f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{_esc(ylabel)}</text>']
    for v, anchor in ((x0, "start"), (x1, "end")):
        parts.append(f'<text x="{px(v):.1f}" y="{pad_t + ph + 14}" text-anchor="{anchor}">{v:.4g}</text>')
    for v in (y0, y1):
        parts.append(f'<text x="{pad_l - 4}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.4g}</text>')
    for k, (name, (x, y)) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        good = np.isfinite(x) & np.isfinite(y)
        edges = np.flatnonzero(np.diff(np.concatenate([[0], good.astype(int), [0]])))
        for a, b in zip(edges[::2], edges[1::2]):
            pts = " ".join(f"{px(u):.2f},{py(w):.2f}" for u, w in zip(x[a:b], y[a:b]))
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        ly = pad_t + 14 * (k + 1)
        parts.append(f'<line x1="{width - pad_r + 10}" y1="{ly - 4}" x2="{width - pad_r + 28}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{width - pad_r + 32}" y="{ly}">{_esc(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def learning_curve_svg(curves) -> str:
    ep = [s.epoch for s in curves]
    series = {"train loss": (ep, [s.train_loss for s in curves])}
    if curves and curves[0].test_loss is not None:
        series["test loss"] = (ep, [s.test_loss for s in curves])
    return svg_line_chart(series, "Learning curve", "epoch", "cross-entropy")


def lever_svg(series_by_wheel: Mapping, max_points: int = 4000) -> str:
    """Lever length over time per wheel (decimated for size)."""
    lines = {}
    for pos, s in series_by_wheel.items():
        step = max(1, len(s) // max_points)
        L = np.where(s.valid, s.L, np.nan)[::step]
        lines[getattr(pos, "value", pos).upper()] = (s.t[::step], L)
    return svg_line_chart(lines, "Lever length", "t [s]", "L [m]")
