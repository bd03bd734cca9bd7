"""Seeded synthetic rover telemetry with known terrain labels and lever length.

Signals are Gaussian around per-terrain baselines, modulated by a piecewise
constant driving speed, plus Poisson-timed half-sine impacts on rocky
terrain. Every stream runs at its own rate with a random phase offset, so
streams are not synchronized. The torque about y is generated as
``ty = fx * L_true + noise``, which makes the lever length known exactly.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .drawbar import LeverSeries
from .errors import ConfigError
from .telemetry import (
    Frame,
    LabelTrack,
    Position,
    SensorId,
    SensorKind,
    TelemetryStream,
    Terrain,
    WHEELS,
    to_raw_frame,
    write_csv,
    write_labels,
)

GRAVITY = 9.81
IMPACT_DURATION = 0.08  # s
IMPACT_ACCEL_PER_N = 0.02  # m/s^2 of chassis jolt per N of wheel impact


@dataclass(frozen=True)
class TerrainProfile:
    terrain: Terrain
    fx: tuple  # (baseline, sigma) [N]
    fy: tuple
    fz: tuple
    tx: tuple  # [N m]
    ty_noise: float  # sigma added to fx * L [N m]
    tz: tuple
    imu_sigma: tuple  # per axis [m/s^2]
    impact_rate: float = 0.0  # events per second
    impact_amplitude: float = 0.0  # N

    def __post_init__(self):
        sigmas = [self.fx[1], self.fy[1], self.fz[1], self.tx[1], self.tz[1], self.ty_noise, *self.imu_sigma]
        if min(sigmas) < 0 or self.impact_rate < 0 or self.impact_amplitude < 0:
            raise ConfigError(f"{self.terrain.value}: sigmas and rates must be non-negative")


# invented values; rock shakes hardest, pebbles sit between compressed sand and rock
DEFAULT_PROFILES = {
    Terrain.LOOSE: TerrainProfile(Terrain.LOOSE, (8.0, 1.0), (0.0, 1.0), (50.0, 2.0), (0.2, 0.3), 0.05,
                                  (0.8, 0.10), (0.05, 0.05, 0.08)),
    Terrain.COMPRESSED: TerrainProfile(Terrain.COMPRESSED, (18.0, 1.5), (0.0, 1.5), (50.0, 3.0), (0.2, 0.4), 0.08,
                                       (1.2, 0.15), (0.08, 0.08, 0.12)),
    Terrain.PEBBLES: TerrainProfile(Terrain.PEBBLES, (13.0, 2.5), (0.0, 2.0), (50.0, 5.0), (0.2, 0.6), 0.12,
                                    (1.0, 0.20), (0.10, 0.10, 0.15), 1.0, 6.0),
    Terrain.ROCK: TerrainProfile(Terrain.ROCK, (14.0, 4.0), (0.0, 3.0), (50.0, 8.0), (0.2, 1.0), 0.20,
                                 (1.1, 0.30), (0.25, 0.25, 0.40), 2.0, 15.0),
}

# static load and traction differences between legs
_WHEEL_FZ_OFFSET = dict(zip(WHEELS, (-2.0, 2.0, -5.0, -3.0, 5.0, 3.0)))
_WHEEL_FX_GAIN = dict(zip(WHEELS, (1.05, 0.95, 1.0, 1.02, 0.98, 1.0)))


@dataclass(frozen=True)
class ScenarioSpec:
    segments: tuple = tuple((t.value, 120.0) for t in Terrain)
    fts_rate: float = 100.0
    imu_rate: float = 50.0
    speed_range: tuple = (0.01, 0.05)  # m/s
    speed_hold: tuple = (5.0, 15.0)  # s each speed is held
    lever_length: float = 0.14
    noise_scale: float = 1.0
    seed: int = 42

    def __post_init__(self):
        segs = tuple((Terrain(t), float(d)) for t, d in self.segments)
        if not segs:
            raise ConfigError("scenario has no segments")
        if any(d <= 0 for _, d in segs):
            raise ConfigError("segment durations must be positive")
        if not (self.fts_rate > 0 and self.imu_rate > 0):
            raise ConfigError("sensor rates must be positive")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return sum(d for _, d in self.segments)


def parse_scenario(text: str, **overrides) -> ScenarioSpec:
    """Read a ``key = value`` scenario description.

    Keys: ``segments`` (``loose:120, rock:60``), ``fts_rate``, ``imu_rate``,
    ``speed_min``, ``speed_max``, ``lever_length``, ``noise_scale``, ``seed``.
    """
    cp = configparser.ConfigParser()
    cp.read_string("[scenario]\n" + text)
    sec = cp["scenario"]
    kw = {}
    known = {"segments", "fts_rate", "imu_rate", "speed_min", "speed_max", "lever_length", "noise_scale", "seed"}
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    if "segments" in sec:
        segs = []
        for item in sec["segments"].split(","):
            name, _, dur = item.strip().partition(":")
            try:
                segs.append((Terrain(name.strip()), float(dur)))
            except ValueError:
                raise ConfigError(f"bad segment {item.strip()!r}; expected <terrain>:<seconds>") from None
        kw["segments"] = tuple(segs)
    for key in ("fts_rate", "imu_rate", "lever_length", "noise_scale"):
        if key in sec:
            kw[key] = sec.getfloat(key)
    if "seed" in sec:
        kw["seed"] = sec.getint("seed")
    if "speed_min" in sec or "speed_max" in sec:
        lo, hi = ScenarioSpec.speed_range
        kw["speed_range"] = (sec.getfloat("speed_min", lo), sec.getfloat("speed_max", hi))
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioSpec(**kw)


def default_scenario(per_class: float = 120.0, seed: int = 42, **kw) -> ScenarioSpec:
    return ScenarioSpec(segments=tuple((t.value, per_class) for t in Terrain), seed=seed, **kw)


@dataclass
class SynthResult:
    streams: dict  # sensor name -> rover-frame TelemetryStream
    labels: LabelTrack
    truth: dict  # Position -> LeverSeries with the embedded lever length
    spec: ScenarioSpec
    speed: tuple = field(default_factory=tuple)  # (change times, speeds)


def _speed_profile(spec: ScenarioSpec, rng):
    times, speeds = [0.0], []
    t = 0.0
    while True:
        speeds.append(rng.uniform(*spec.speed_range))
        t += rng.uniform(*spec.speed_hold)
        if t >= spec.duration:
            break
        times.append(t)
    return np.array(times), np.array(speeds)


def _speed_gain(t, profile, spec):
    times, speeds = profile
    v = speeds[np.searchsorted(times, t, side="right") - 1]
    lo, hi = spec.speed_range
    span = hi - lo if hi > lo else 1.0
    # faster driving draws more traction force
    return 0.85 + 0.3 * (v - lo) / span


def _impacts(t, profiles, rng):
    """Sum of half-sine pulses with per-terrain Poisson arrival times."""
    out = np.zeros_like(t)
    bounds = np.concatenate([[0.0], np.cumsum([d for _, d in profiles["segments"]])])
    for k, (terrain, seg_dur) in enumerate(profiles["segments"]):
        prof = profiles["by_terrain"][terrain]
        if prof.impact_rate <= 0 or prof.impact_amplitude <= 0:
            continue
        n_events = rng.poisson(prof.impact_rate * seg_dur)
        starts = bounds[k] + rng.uniform(0.0, seg_dur, size=n_events)
        amps = prof.impact_amplitude * rng.uniform(0.5, 1.0, size=n_events)
        for s, a in zip(np.sort(starts), amps):
            lo, hi = np.searchsorted(t, [s, s + IMPACT_DURATION])
            tau = (t[lo:hi] - s) / IMPACT_DURATION
            out[lo:hi] += a * np.sin(np.pi * tau) * np.exp(-2.0 * tau)
    return out


def _timestamps(rate, duration, rng):
    offset = rng.uniform(0.0, 1.0 / rate)
    n = int(np.floor((duration - offset) * rate - 1e-9)) + 1
    return offset + np.arange(n) / rate


def generate(spec: ScenarioSpec = ScenarioSpec(), profiles=None) -> SynthResult:
    """Generate all seven streams, the label track and the lever ground truth."""
    profiles = dict(DEFAULT_PROFILES if profiles is None else profiles)
    missing = {t for t, _ in spec.segments} - set(profiles)
    if missing:
        raise ConfigError(f"no terrain profile for {sorted(m.value for m in missing)}")

    seeds = np.random.SeedSequence(spec.seed).spawn(1 + 1 + len(WHEELS))
    speed = _speed_profile(spec, np.random.default_rng(seeds[0]))
    bounds = np.concatenate([[0.0], np.cumsum([d for _, d in spec.segments])])
    seg_terrain = [t for t, _ in spec.segments]
    ctx = {"segments": spec.segments, "by_terrain": profiles}
    noise = spec.noise_scale

    def terrain_params(t, getter):
        idx = np.clip(np.searchsorted(bounds, t, side="right") - 1, 0, len(seg_terrain) - 1)
        table = np.array([getter(profiles[seg_terrain[k]]) for k in range(len(seg_terrain))], dtype=np.float64)
        return table[idx]

    streams = {}
    truth = {}

    rng = np.random.default_rng(seeds[1])
    t = _timestamps(spec.imu_rate, spec.duration, rng)
    sig = terrain_params(t, lambda p: p.imu_sigma)
    jolt = IMPACT_ACCEL_PER_N * _impacts(t, ctx, rng)
    imu = {
        "ax": noise * sig[:, 0] * rng.standard_normal(t.size),
        "ay": noise * sig[:, 1] * rng.standard_normal(t.size),
        "az": GRAVITY + noise * sig[:, 2] * rng.standard_normal(t.size) + jolt,
    }
    streams["imu"] = TelemetryStream(SensorId(SensorKind.IMU, Position.CHASSIS), t, imu, Frame.ROVER)

    for wheel, ss in zip(WHEELS, seeds[2:]):
        rng = np.random.default_rng(ss)
        t = _timestamps(spec.fts_rate, spec.duration, rng)
        gain = _speed_gain(t, speed, spec) * _WHEEL_FX_GAIN[wheel]
        base = {name: terrain_params(t, lambda p, n=name: getattr(p, n)) for name in ("fx", "fy", "fz", "tx", "tz")}
        ty_sigma = terrain_params(t, lambda p: p.ty_noise)
        hit = _impacts(t, ctx, rng)

        def gauss(name):
            b = base[name]
            return b[:, 0] + noise * b[:, 1] * rng.standard_normal(t.size)

        fx = gain * gauss("fx") + 0.3 * hit
        fy = gauss("fy")
        fz = gauss("fz") + _WHEEL_FZ_OFFSET[wheel] + hit
        tx = gauss("tx") + 0.02 * hit
        tz = gauss("tz")
        ty = fx * spec.lever_length + noise * ty_sigma * rng.standard_normal(t.size)
        chans = {"fx": fx, "fy": fy, "fz": fz, "tx": tx, "ty": ty, "tz": tz}
        sid = SensorId(SensorKind.FTS, wheel)
        streams[sid.name] = TelemetryStream(sid, t, chans, Frame.ROVER)
        L = np.full(t.size, spec.lever_length)
        truth[wheel] = LeverSeries(wheel, t, fx, ty, L, np.ones(t.size, dtype=bool))

    track = LabelTrack(tuple((bounds[k], bounds[k + 1], seg_terrain[k]) for k in range(len(seg_terrain))))
    return SynthResult(streams, track, truth, spec, speed)


def write_scenario(result: SynthResult, out_dir) -> list:
    """Write mounted-frame sensor CSVs, ``labels.csv`` and ``truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(result.streams):
        path = out / f"{name}.csv"
        write_csv(to_raw_frame(result.streams[name]), path)
        written.append(path)
    write_labels(result.labels, out / "labels.csv")
    spec = result.spec
    truth = {
        "lever_length": spec.lever_length,
        "seed": spec.seed,
        "noise_scale": spec.noise_scale,
        "fts_rate": spec.fts_rate,
        "imu_rate": spec.imu_rate,
        "segments": [[t.value, d] for t, d in spec.segments],
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written += [out / "labels.csv", out / "truth.json"]
    return written


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=seed)
