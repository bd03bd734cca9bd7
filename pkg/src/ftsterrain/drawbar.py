"""Lever-arm filtering of wheel force-torque signals.

With a rigid sensor-to-wheel linkage the torque about y at the sensor is the
longitudinal force times the distance to the contact point, ``ty = fx * L``.
Geometry bounds ``L`` between the sensor-to-axle distance and that distance
plus the wheel radius, so samples whose ``|ty| / |fx|`` falls outside the
(tolerance-widened) band are unlikely to reflect clean traction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, FrameError
from .telemetry import Frame, Position, SensorKind, TelemetryStream, WHEELS

EPS_FORCE = 0.5  # N
# absorbs representation error at closed band edges (e.g. 0.1 - 0.05)
_EDGE_SLACK = 1e-12


@dataclass(frozen=True)
class WheelGeometry:
    sensor_to_axle: float = 0.10
    wheel_diameter: float = 0.15

    def __post_init__(self):
        if not (self.sensor_to_axle > 0 and self.wheel_diameter > 0):
            raise ConfigError("geometry lengths must be positive")

    @property
    def L_min(self) -> float:
        return self.sensor_to_axle

    @property
    def L_max(self) -> float:
        return self.sensor_to_axle + self.wheel_diameter / 2.0


@dataclass(frozen=True)
class LeverSeries:
    """Per-wheel lever lengths. ``L`` is NaN where ``|fx| < eps_force``."""

    position: Position
    t: np.ndarray
    fx: np.ndarray
    ty: np.ndarray
    L: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return self.t.size


def lever_length(fx: float, ty: float, eps_force: float = EPS_FORCE) -> Optional[float]:
    """``|ty| / |fx|`` in metres, or ``None`` when ``|fx| < eps_force``."""
    if abs(fx) < eps_force:
        return None
    return abs(ty) / abs(fx)


def lever_lengths(fx, ty, eps_force: float = EPS_FORCE) -> np.ndarray:
    fx = np.asarray(fx, dtype=np.float64)
    ty = np.asarray(ty, dtype=np.float64)
    defined = np.abs(fx) >= eps_force
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(defined, np.abs(ty) / np.where(defined, np.abs(fx), 1.0), np.nan)


def lever_series(stream: TelemetryStream, eps_force: float = EPS_FORCE) -> LeverSeries:
    """Lever lengths of one rover-frame FTS stream; validity = L defined."""
    if stream.sensor.kind is not SensorKind.FTS:
        raise ConfigError(f"{stream.sensor.name} is not a force-torque sensor")
    if stream.frame is not Frame.ROVER:
        raise FrameError(f"{stream.sensor.name} must be normalized to the rover frame first")
    L = lever_lengths(stream["fx"], stream["ty"], eps_force)
    return LeverSeries(stream.sensor.position, stream.t, stream["fx"], stream["ty"], L, ~np.isnan(L))


def filter_by_lever(series: LeverSeries, geom: WheelGeometry = WheelGeometry(), tol: float = 0.05,
                    min_abs_fx: float | None = None) -> LeverSeries:
    """Flag points whose lever length lies in ``[L_min - tol, L_max + tol]``.

    Nothing is dropped; rejected points stay in the series with
    ``valid = False``. ``min_abs_fx`` additionally rejects small forces
    (e.g. a rover standing still).
    """
    if tol < 0:
        raise ConfigError("tolerance must be non-negative")
    L = series.L
    with np.errstate(invalid="ignore"):
        valid = (L >= geom.L_min - tol - _EDGE_SLACK) & (L <= geom.L_max + tol + _EDGE_SLACK)
    if min_abs_fx is not None:
        valid &= np.abs(series.fx) >= min_abs_fx
    return replace(series, valid=valid)


@dataclass(frozen=True)
class RetentionReport:
    tolerance: float
    per_wheel: dict  # Position -> percent, or None when the wheel has no data
    total: Optional[float]


def retention_report(series: Mapping[Position, LeverSeries], geom: WheelGeometry = WheelGeometry(),
                     tolerances: Sequence[float] = (0.05, 0.02, 0.01),
                     min_abs_fx: float | None = None) -> list:
    """Percentage of points kept per wheel and pooled, for each tolerance.

    The denominator counts every sample, including those where the lever
    length is undefined because ``|fx|`` is tiny.
    """
    if not series:
        raise ConfigError("retention needs at least one wheel series")
    reports = []
    for tol in tolerances:
        per_wheel = {}
        kept = total = 0
        for pos in WHEELS:
            s = series.get(pos)
            if s is None or len(s) == 0:
                per_wheel[pos] = None
                continue
            v = int(np.count_nonzero(filter_by_lever(s, geom, tol, min_abs_fx).valid))
            per_wheel[pos] = 100.0 * v / len(s)
            kept += v
            total += len(s)
        reports.append(RetentionReport(float(tol), per_wheel, 100.0 * kept / total if total else None))
    return reports


def rolling_std(t, values, window: float) -> np.ndarray:
    """Population std over the points within ``window/2`` seconds of each point."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    x = x - x.mean()
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    lo = np.searchsorted(t, t - window / 2.0, side="left")
    hi = np.searchsorted(t, t + window / 2.0, side="right")
    n = hi - lo
    mean = (c1[hi] - c1[lo]) / n
    var = (c2[hi] - c2[lo]) / n - mean * mean
    return np.sqrt(np.maximum(var, 0.0))


def _runs(mask) -> list:
    """(start, stop) index pairs of consecutive True values."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    edges = np.flatnonzero(m[1:] != m[:-1])
    return list(zip(edges[::2], edges[1::2]))


def detect_stable_intervals(series: LeverSeries, min_duration: float = 5.0, max_std: float = 0.01,
                            window: float = 1.0) -> list:
    """Maximal time spans where the lever length is valid and steady.

    A point qualifies when it is valid and the rolling std of ``L`` (over the
    valid points of its run within a ``window``-second neighbourhood) is at
    most ``max_std``. Runs of qualifying points lasting at least
    ``min_duration`` are returned as sorted ``(t_start, t_end)`` pairs.
    """
    if not (min_duration > 0 and max_std > 0 and window > 0):
        raise ConfigError("min_duration, max_std and window must be positive")
    ok = np.zeros(len(series), dtype=bool)
    for a, b in _runs(series.valid):
        ok[a:b] = rolling_std(series.t[a:b], series.L[a:b], window) <= max_std
    out = []
    for a, b in _runs(ok):
        t0, t1 = float(series.t[a]), float(series.t[b - 1])
        if t1 - t0 >= min_duration:
            out.append((t0, t1))
    return out


@dataclass(frozen=True)
class DrawbarEstimate:
    t_start: float
    t_end: float
    mean_fx: float
    std_fx: float
    n_points: int


def drawbar_estimate(series: LeverSeries, intervals) -> list:
    """Mean and population std of ``fx`` over the valid points of each interval."""
    out = []
    for t0, t1 in intervals:
        sel = (series.t >= t0) & (series.t <= t1) & series.valid
        fx = series.fx[sel]
        if fx.size == 0:
            warnings.warn(f"interval [{t0}, {t1}] has no valid points; skipped", stacklevel=2)
            continue
        out.append(DrawbarEstimate(float(t0), float(t1), float(fx.mean()), float(fx.std()), int(fx.size)))
    return out
