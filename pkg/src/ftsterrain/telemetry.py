"""Sensor streams, canonical CSV ingestion and terrain label tracks.

One CSV file holds one sensor. The first column is ``t`` (seconds), followed by
``fx,fy,fz,tx,ty,tz`` for a force-torque sensor or ``ax,ay,az`` for the IMU.
Streams are never resampled here; alignment happens when windows are built.

Right-hand force-torque sensors are mounted rotated by 180 degrees around
their z axis. :func:`normalize_frame` undoes that so every consumer sees the
left-hand (rover) convention: x forward, y to the left, z up.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import FrameError, OrderingError, ParseError, SchemaError, DataError


class SensorKind(str, Enum):
    FTS = "fts"
    IMU = "imu"


class Position(str, Enum):
    FL = "fl"
    FR = "fr"
    CL = "cl"
    CR = "cr"
    BL = "bl"
    BR = "br"
    CHASSIS = "chassis"


WHEELS = (Position.FL, Position.FR, Position.CL, Position.CR, Position.BL, Position.BR)
RIGHT_SIDE = frozenset({Position.FR, Position.CR, Position.BR})


class Frame(str, Enum):
    RAW = "raw"
    ROVER = "rover"


class Terrain(str, Enum):
    LOOSE = "loose"
    COMPRESSED = "compressed"
    PEBBLES = "pebbles"
    ROCK = "rock"


TERRAINS = tuple(t.value for t in Terrain)

FTS_CHANNELS = ("fx", "fy", "fz", "tx", "ty", "tz")
IMU_CHANNELS = ("ax", "ay", "az")
# channels negated by a 180 degree rotation about z
_FLIPPED = ("fx", "fy", "tx", "ty")


@dataclass(frozen=True)
class SensorId:
    kind: SensorKind
    position: Position

    def __post_init__(self):
        object.__setattr__(self, "kind", SensorKind(self.kind))
        object.__setattr__(self, "position", Position(self.position))
        if self.kind is SensorKind.IMU and self.position is not Position.CHASSIS:
            raise SchemaError("the IMU is mounted on the chassis")
        if self.kind is SensorKind.FTS and self.position is Position.CHASSIS:
            raise SchemaError("force-torque sensors sit at a wheel position")

    @property
    def name(self) -> str:
        """Canonical prefix, ``imu`` or ``fts_<wheel>``."""
        if self.kind is SensorKind.IMU:
            return "imu"
        return f"fts_{self.position.value}"

    @property
    def channels(self) -> tuple:
        return FTS_CHANNELS if self.kind is SensorKind.FTS else IMU_CHANNELS

    @classmethod
    def parse(cls, name: str) -> "SensorId":
        """Inverse of :attr:`name`; also accepts a file stem such as ``fts_FR``."""
        key = name.strip().lower()
        if key == "imu":
            return cls(SensorKind.IMU, Position.CHASSIS)
        if key.startswith("fts_"):
            try:
                return cls(SensorKind.FTS, Position(key[4:]))
            except ValueError:
                pass
        raise SchemaError(f"unknown sensor name {name!r}; expected 'imu' or 'fts_<fl|fr|cl|cr|bl|br>'")


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TelemetryStream:
    """Timestamped samples of one sensor. Arrays are read-only."""

    sensor: SensorId
    t: np.ndarray
    channels: Mapping[str, np.ndarray]
    frame: Frame = Frame.RAW

    def __post_init__(self):
        t = _readonly(self.t)
        if t.ndim != 1:
            raise SchemaError("timestamps must be one-dimensional")
        expected = set(self.sensor.channels)
        if set(self.channels) != expected:
            raise SchemaError(
                f"{self.sensor.name}: channels {sorted(self.channels)} do not match {sorted(expected)}"
            )
        chans = {}
        for name in self.sensor.channels:
            values = _readonly(self.channels[name])
            if values.shape != t.shape:
                raise SchemaError(f"{self.sensor.name}.{name}: length {values.size} != {t.size} timestamps")
            chans[name] = values
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise OrderingError(f"{self.sensor.name}: timestamps are not monotone non-decreasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "channels", chans)
        object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self):
        return self.t.size

    def __getitem__(self, channel: str) -> np.ndarray:
        return self.channels[channel]

    @property
    def span(self) -> tuple:
        if len(self) == 0:
            raise DataError(f"{self.sensor.name}: empty stream")
        return float(self.t[0]), float(self.t[-1])

    def matrix(self) -> np.ndarray:
        """Channel values as an ``(n, n_channels)`` array in schema order."""
        return np.column_stack([self.channels[c] for c in self.sensor.channels])


def _rotate_z180(channels: Mapping[str, np.ndarray]) -> dict:
    return {k: (-v if k in _FLIPPED else v) for k, v in channels.items()}


def normalize_frame(stream: TelemetryStream) -> TelemetryStream:
    """Bring a RAW stream into the rover frame.

    Right-side force-torque sensors have x and y (forces and torques) negated;
    left-side sensors and the IMU are already in the rover frame.
    """
    if stream.frame is not Frame.RAW:
        raise FrameError(f"{stream.sensor.name} is already in the {stream.frame.value} frame")
    channels = stream.channels
    if stream.sensor.kind is SensorKind.FTS and stream.sensor.position in RIGHT_SIDE:
        channels = _rotate_z180(channels)
    return TelemetryStream(stream.sensor, stream.t, channels, Frame.ROVER)


def to_raw_frame(stream: TelemetryStream) -> TelemetryStream:
    """Inverse of :func:`normalize_frame`, used when writing mounted-sensor logs."""
    if stream.frame is not Frame.ROVER:
        raise FrameError(f"{stream.sensor.name} is already in the {stream.frame.value} frame")
    channels = stream.channels
    if stream.sensor.kind is SensorKind.FTS and stream.sensor.position in RIGHT_SIDE:
        channels = _rotate_z180(channels)
    return TelemetryStream(stream.sensor, stream.t, channels, Frame.RAW)


def ingest_csv(path, sensor) -> TelemetryStream:
    """Read one canonical sensor CSV into a RAW-frame stream.

    Parameters
    ----------
    path : path-like
        CSV file with header ``t,<channels>``.
    sensor : SensorId or str
        Which sensor the file belongs to (``"imu"``, ``"fts_fr"``, ...).

    Raises
    ------
    SchemaError
        Header does not match the sensor schema.
    ParseError
        A value is missing, malformed or not finite; cites the row.
    OrderingError
        A timestamp is smaller than its predecessor.
    """
    if not isinstance(sensor, SensorId):
        sensor = SensorId.parse(str(sensor))
    path = Path(path)
    columns = ("t",) + sensor.channels
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in columns]
        if unknown:
            raise SchemaError(f"{path}: unknown column(s) {unknown} for {sensor.name}")
        if tuple(header) != columns:
            raise SchemaError(f"{path}: header {header} does not match {list(columns)}")
        rows = []
        for row_no, fields in enumerate(reader, start=1):
            line = row_no + 1
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(columns):
                raise ParseError(f"expected {len(columns)} fields, got {len(fields)}", line, row_no)
            values = []
            for name, text in zip(columns, fields):
                try:
                    v = float(text)
                except ValueError:
                    raise ParseError(f"column {name}: cannot parse {text!r}", line, row_no) from None
                if not math.isfinite(v):
                    raise ParseError(f"column {name}: non-finite value {text.strip()!r}", line, row_no)
                values.append(v)
            if rows and values[0] < rows[-1][0]:
                raise OrderingError(
                    f"{path}: timestamp {values[0]!r} at row {row_no} precedes {rows[-1][0]!r}"
                )
            rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    chans = {name: data[:, i + 1] for i, name in enumerate(sensor.channels)}
    return TelemetryStream(sensor, data[:, 0], chans, Frame.RAW)


def load_stream(path, sensor=None) -> TelemetryStream:
    """Ingest and normalize; the sensor defaults to the file stem."""
    if sensor is None:
        sensor = SensorId.parse(Path(path).stem)
    return normalize_frame(ingest_csv(path, sensor))


def write_csv(stream: TelemetryStream, path) -> None:
    """Write a stream in canonical CSV form.

    Floats use the shortest round-tripping representation, so
    ``ingest_csv(write_csv(s))`` reproduces every value bit for bit.
    """
    cols = stream.sensor.channels
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + cols)
        arrays = [stream.t] + [stream.channels[c] for c in cols]
        for values in zip(*(a.tolist() for a in arrays)):
            w.writerow([repr(v) for v in values])


@dataclass(frozen=True)
class LabelTrack:
    """Terrain annotations as half-open intervals ``[t_start, t_end)``."""

    intervals: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cleaned = []
        for t0, t1, terrain in self.intervals:
            t0, t1 = float(t0), float(t1)
            if not t0 < t1:
                raise DataError(f"label interval [{t0}, {t1}) is empty or reversed")
            cleaned.append((t0, t1, Terrain(terrain)))
        cleaned.sort(key=lambda iv: iv[0])
        for (a0, a1, _), (b0, _, _) in zip(cleaned, cleaned[1:]):
            if b0 < a1:
                raise DataError(f"label intervals [{a0}, {a1}) and [{b0}, ...) overlap")
        object.__setattr__(self, "intervals", tuple(cleaned))

    def at(self, t: float) -> Optional[Terrain]:
        """Terrain at time ``t`` or ``None``."""
        for t0, t1, terrain in self.intervals:
            if t0 <= t < t1:
                return terrain
        return None

    def window(self, t_start: float, t_end: float) -> Optional[Terrain]:
        """Terrain if ``[t_start, t_end)`` lies entirely inside one interval."""
        for t0, t1, terrain in self.intervals:
            if t0 <= t_start and t_end <= t1:
                return terrain
        return None

    @property
    def duration(self) -> float:
        return sum(t1 - t0 for t0, t1, _ in self.intervals)


def label_windows(track: LabelTrack, t, t_end=None) -> Optional[Terrain]:
    """Look up a label for a time point, or for a window when ``t_end`` is given."""
    if t_end is None:
        return track.at(t)
    return track.window(t, t_end)


def read_labels(path) -> LabelTrack:
    path = Path(path)
    intervals = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["t_start", "t_end", "terrain"]:
            raise SchemaError(f"{path}: expected header t_start,t_end,terrain, got {header}")
        for row_no, fields in enumerate(reader, start=1):
            if not fields:
                continue
            if len(fields) != 3:
                raise ParseError("expected 3 fields", row_no + 1, row_no)
            try:
                t0, t1 = float(fields[0]), float(fields[1])
            except ValueError:
                raise ParseError(f"bad interval bounds {fields[:2]}", row_no + 1, row_no) from None
            name = fields[2].strip()
            if name not in TERRAINS:
                raise ParseError(f"unknown terrain {name!r}", row_no + 1, row_no)
            intervals.append((t0, t1, name))
    return LabelTrack(tuple(intervals))


def write_labels(track: LabelTrack, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_start", "t_end", "terrain"])
        for t0, t1, terrain in track.intervals:
            w.writerow([repr(t0), repr(t1), terrain.value])


def discover_streams(inputs: Sequence) -> dict:
    """Map sensor names to CSV paths.

    Each input is either a CSV file named after its sensor (``imu.csv``,
    ``fts_fl.csv``) or a directory searched for such files.
    """
    found = {}
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            for f in sorted(p.glob("*.csv")):
                try:
                    sid = SensorId.parse(f.stem)
                except SchemaError:
                    continue
                found[sid.name] = f
        elif p.exists():
            found[SensorId.parse(p.stem).name] = p
        else:
            raise FileNotFoundError(f"input not found: {p}")
    return found
