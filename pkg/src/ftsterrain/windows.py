"""Fixed-length windows over unsynchronized streams and their statistics.

Every selected channel contributes five statistics per window (mean, median,
minimum, maximum, population standard deviation). Feature names follow
``<sensor>_<channel>_<stat>``, e.g. ``fts_fl_fx_mean`` or ``imu_az_std``, and
are ordered lexicographically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AlignmentError, ConfigError, EmptyWindowError, FrameError, SchemaError
from .telemetry import Frame, LabelTrack, SensorKind, TelemetryStream, Terrain

STATS = ("mean", "median", "min", "max", "std")
DERIVED_CHANNEL = "fxtz"

# division guard for the fx / tz feature
EPS_DIV = 1e-6
CLAMP = 1e6

_ALIGN_SLACK = 1e-9


@dataclass(frozen=True)
class WindowSpec:
    length: float = 1.0
    stride: float = 1.0

    def __post_init__(self):
        if not (self.length > 0 and self.stride > 0):
            raise ConfigError("window length and stride must be positive")


@dataclass(frozen=True)
class FeatureSelection:
    use_imu: bool = True
    use_fts: bool = True
    include_fx_over_tz: bool = True

    def __post_init__(self):
        if not (self.use_imu or self.use_fts):
            raise ConfigError("select at least one of IMU and FTS features")

    @classmethod
    def from_variant(cls, variant: str, derived: bool = True) -> "FeatureSelection":
        try:
            use_imu, use_fts = {"imu": (True, False), "fts": (False, True), "all": (True, True)}[variant]
        except KeyError:
            raise ConfigError(f"unknown feature variant {variant!r}; choose imu, fts or all") from None
        return cls(use_imu, use_fts, derived)

    def expected_count(self, n_fts: int = 6) -> int:
        n = 0
        if self.use_imu:
            n += 5 * 3
        if self.use_fts:
            n += 5 * n_fts * (6 + (1 if self.include_fx_over_tz else 0))
        return n


@dataclass(frozen=True)
class WindowSample:
    t_start: float
    features: dict
    label: Optional[Terrain] = None


def window_statistics(values) -> tuple:
    """Return ``(mean, median, min, max, std)`` of a non-empty series.

    ``std`` is the population standard deviation; the median of an
    even-length series averages the two middle values.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise EmptyWindowError("window contains no samples")
    return (float(x.mean()), float(np.median(x)), float(x.min()), float(x.max()), float(x.std()))


def _stats_columns(block: np.ndarray) -> np.ndarray:
    # block is (n, channels); result is (channels, 5)
    return np.column_stack(
        [block.mean(axis=0), np.median(block, axis=0), block.min(axis=0), block.max(axis=0), block.std(axis=0)]
    )


def derived_fx_over_tz(fx, tz):
    """Force in x over torque in z, kept finite.

    For ``|tz| < EPS_DIV`` the ratio is replaced by ``sign(fx / tz) * CLAMP``
    (zero when ``fx`` is zero). Works on scalars and arrays.
    """
    fx_a = np.asarray(fx, dtype=np.float64)
    tz_a = np.asarray(tz, dtype=np.float64)
    small = np.abs(tz_a) < EPS_DIV
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small, 0.0, fx_a / np.where(small, 1.0, tz_a))
    # a zero tz counts as positive, so the sign follows fx alone
    tz_sign = np.where(tz_a < 0, -1.0, 1.0)
    clamped = np.sign(fx_a) * tz_sign * CLAMP
    out = np.where(small, clamped, ratio)
    return float(out) if out.ndim == 0 else out


def _channel_block(stream: TelemetryStream, derived: bool):
    names = list(stream.sensor.channels)
    block = stream.matrix()
    if derived and stream.sensor.kind is SensorKind.FTS:
        block = np.column_stack([block, derived_fx_over_tz(stream["fx"], stream["tz"])])
        names.append(DERIVED_CHANNEL)
    return names, block


def select_streams(streams: Iterable[TelemetryStream], sel: FeatureSelection) -> list:
    chosen = []
    for s in streams:
        if s.sensor.kind is SensorKind.IMU and sel.use_imu:
            chosen.append(s)
        elif s.sensor.kind is SensorKind.FTS and sel.use_fts:
            chosen.append(s)
    chosen.sort(key=lambda s: s.sensor.name)
    names = [s.sensor.name for s in chosen]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate sensor streams: {names}")
    if sel.use_imu and not any(s.sensor.kind is SensorKind.IMU for s in chosen):
        raise SchemaError("IMU features selected but no IMU stream given")
    if sel.use_fts and not any(s.sensor.kind is SensorKind.FTS for s in chosen):
        raise SchemaError("FTS features selected but no force-torque stream given")
    return chosen


def window_starts(streams: Sequence[TelemetryStream], spec: WindowSpec) -> np.ndarray:
    """Start times of all windows inside the common span of ``streams``."""
    spans = [s.span for s in streams]
    start = max(a for a, _ in spans)
    end = min(b for _, b in spans)
    if end - start < spec.length - _ALIGN_SLACK:
        raise AlignmentError(f"streams overlap for {max(end - start, 0.0):.6g} s, less than one window")
    n = int(math.floor((end - start - spec.length) / spec.stride + _ALIGN_SLACK)) + 1
    return start + spec.stride * np.arange(n)


def build_samples(streams, labels: Optional[LabelTrack], spec: WindowSpec = WindowSpec(),
                  sel: FeatureSelection = FeatureSelection()) -> list:
    """Slice rover-frame streams into windows and compute per-window features.

    A window ``[t0, t0 + length)`` is kept only if every selected stream has at
    least one sample inside it. Labels come from ``labels`` and are set only
    when the whole window lies in one annotated interval.
    """
    chosen = select_streams(streams, sel)
    for s in chosen:
        if s.frame is not Frame.ROVER:
            raise FrameError(f"{s.sensor.name} must be normalized to the rover frame first")
    starts = window_starts(chosen, spec)

    per_stream = []
    for s in chosen:
        names, block = _channel_block(s, sel.include_fx_over_tz)
        lo = np.searchsorted(s.t, starts, side="left")
        hi = np.searchsorted(s.t, starts + spec.length, side="left")
        feat_names = [f"{s.sensor.name}_{c}_{stat}" for c in names for stat in STATS]
        per_stream.append((feat_names, block, lo, hi))

    all_names = [n for names, *_ in per_stream for n in names]
    order = sorted(range(len(all_names)), key=all_names.__getitem__)
    ordered_names = [all_names[i] for i in order]

    samples = []
    for k, t0 in enumerate(starts):
        if any(hi[k] <= lo[k] for _, _, lo, hi in per_stream):
            continue
        values = np.concatenate([_stats_columns(block[lo[k]:hi[k]]).ravel() for _, block, lo, hi in per_stream])
        if not np.all(np.isfinite(values)):
            continue
        label = labels.window(float(t0), float(t0) + spec.length) if labels is not None else None
        feats = {name: float(values[i]) for name, i in zip(ordered_names, order)}
        samples.append(WindowSample(float(t0), feats, label))
    return samples


def feature_names(samples: Sequence[WindowSample]) -> list:
    if not samples:
        return []
    names = list(samples[0].features)
    for s in samples:
        if list(s.features) != names:
            raise SchemaError(f"sample at t={s.t_start} has a different feature layout")
    return names


def variant_columns(names: Sequence[str], variant: str) -> list:
    """Feature names belonging to ``imu``, ``fts`` or ``all``."""
    if variant == "all":
        cols = list(names)
    elif variant in ("imu", "fts"):
        cols = [n for n in names if n.startswith(variant + "_")]
    else:
        raise ConfigError(f"unknown feature variant {variant!r}; choose imu, fts or all")
    if not cols:
        raise SchemaError(f"no {variant} features in the sample set")
    return cols


def to_arrays(samples: Sequence[WindowSample], variant: str = "all", labeled_only: bool = True):
    """Feature matrix, label array and column names for model training."""
    names = variant_columns(feature_names(samples), variant)
    rows = [s for s in samples if s.label is not None or not labeled_only]
    X = np.array([[s.features[n] for n in names] for s in rows], dtype=np.float64).reshape(len(rows), len(names))
    y = np.array([s.label.value if s.label is not None else "" for s in rows], dtype=object)
    return X, y, names


def write_samples_csv(samples: Sequence[WindowSample], path) -> None:
    names = feature_names(samples)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "label"] + names)
        for s in samples:
            w.writerow([repr(s.t_start), s.label.value if s.label else ""] + [repr(s.features[n]) for n in names])


def read_samples_csv(path) -> list:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["t_start", "label"]:
            raise SchemaError(f"{path}: expected header starting with t_start,label")
        names = header[2:]
        samples = []
        for fields in reader:
            if not fields:
                continue
            label = Terrain(fields[1]) if fields[1] else None
            samples.append(WindowSample(float(fields[0]), dict(zip(names, map(float, fields[2:]))), label))
    return samples
