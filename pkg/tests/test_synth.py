import json

import numpy as np
import pytest

from ftsterrain import synth
from ftsterrain.drawbar import EPS_FORCE, lever_series
from ftsterrain.errors import ConfigError
from ftsterrain.telemetry import Frame, Terrain, discover_streams, load_stream, read_labels
from ftsterrain.windows import build_samples, to_arrays

CLASSES = ["loose", "compressed", "pebbles", "rock"]


def test_label_track_matches_scenario():
    run = synth.generate(synth.default_scenario(60.0, seed=1))
    assert len(run.labels.intervals) == 4
    assert run.labels.duration == 240.0
    assert [iv[2] for iv in run.labels.intervals] == list(Terrain)


def test_same_seed_bit_identical():
    a = synth.generate(synth.default_scenario(20.0, seed=3))
    b = synth.generate(synth.default_scenario(20.0, seed=3))
    c = synth.generate(synth.default_scenario(20.0, seed=4))
    for name in a.streams:
        assert a.streams[name].matrix().tobytes() == b.streams[name].matrix().tobytes()
        assert a.streams[name].t.tobytes() == b.streams[name].t.tobytes()
    assert a.streams["imu"].matrix().tobytes() != c.streams["imu"].matrix().tobytes()


def test_streams_unsynchronized():
    run = synth.generate(synth.default_scenario(10.0))
    firsts = {name: s.t[0] for name, s in run.streams.items()}
    assert len(set(firsts.values())) == len(firsts)
    assert np.diff(run.streams["imu"].t).mean() == pytest.approx(1 / 50)
    assert np.diff(run.streams["fts_fl"].t).mean() == pytest.approx(1 / 100)
    assert all(s.frame is Frame.ROVER for s in run.streams.values())


@pytest.mark.parametrize("L_true", [0.15, 0.12])
def test_noiseless_lever_recovery(L_true):
    run = synth.generate(synth.default_scenario(30.0, seed=1, noise_scale=0.0, lever_length=L_true))
    for name, s in run.streams.items():
        if name == "imu":
            continue
        ls = lever_series(s)
        defined = np.abs(ls.fx) >= EPS_FORCE
        assert defined.all()
        assert np.max(np.abs(ls.L[defined] - L_true)) <= 1e-12


def test_missing_profile():
    profiles = {k: v for k, v in synth.DEFAULT_PROFILES.items() if k is not Terrain.ROCK}
    with pytest.raises(ConfigError, match="rock"):
        synth.generate(synth.default_scenario(5.0), profiles)


def test_profile_validation():
    with pytest.raises(ConfigError):
        synth.TerrainProfile(Terrain.ROCK, (1, -1), (0, 1), (0, 1), (0, 1), 0.1, (0, 1), (0.1, 0.1, 0.1))
    with pytest.raises(ConfigError):
        synth.ScenarioSpec(segments=(("rock", 0.0),))


def test_rock_shakes_more_than_loose():
    run = synth.generate(synth.default_scenario(60.0, seed=8))
    imu = run.streams["imu"]
    labels = [run.labels.at(t) for t in imu.t]
    is_rock = np.array([lab is Terrain.ROCK for lab in labels])
    is_loose = np.array([lab is Terrain.LOOSE for lab in labels])
    for axis in ("ax", "ay", "az"):
        rock = imu[axis][is_rock].std()
        loose = imu[axis][is_loose].std()
        assert rock > loose


def test_designed_class_margins(default_samples):
    # every pair of classes differs in some FTS window statistic by > 3 sigma
    X, y, _ = to_arrays(default_samples, "fts")
    for i, a in enumerate(CLASSES):
        for b in CLASSES[i + 1:]:
            A, B = X[y == a], X[y == b]
            gap = np.abs(A.mean(0) - B.mean(0)) / np.maximum(A.std(0), B.std(0))
            assert gap.max() > 3.0, (a, b)


def test_parse_scenario():
    spec = synth.parse_scenario("segments = loose:30, rock:15\nfts_rate = 200\nseed = 9\nspeed_max = 0.04\n")
    assert spec.segments == ((Terrain.LOOSE, 30.0), (Terrain.ROCK, 15.0))
    assert spec.fts_rate == 200.0 and spec.seed == 9 and spec.speed_range == (0.01, 0.04)
    assert synth.parse_scenario("seed = 9", seed=4).seed == 4
    with pytest.raises(ConfigError):
        synth.parse_scenario("colour = red")
    with pytest.raises(ConfigError):
        synth.parse_scenario("segments = mud:10")


def test_write_scenario_round_trip(tmp_path):
    run = synth.generate(synth.default_scenario(8.0, seed=2))
    synth.write_scenario(run, tmp_path)
    found = discover_streams([tmp_path])
    assert sorted(found) == sorted(run.streams)
    for name, path in found.items():
        s = load_stream(path)
        assert s.matrix().tobytes() == run.streams[name].matrix().tobytes()
    assert read_labels(tmp_path / "labels.csv") == run.labels
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["lever_length"] == 0.14 and truth["seed"] == 2


def test_window_count_matches_span():
    run = synth.generate(synth.default_scenario(60.0, seed=1))
    samples = build_samples(run.streams.values(), run.labels)
    # common span is just under 240 s, so floor(span) windows
    assert len(samples) == 239
