import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftsterrain.drawbar import (
    EPS_FORCE,
    LeverSeries,
    WheelGeometry,
    detect_stable_intervals,
    drawbar_estimate,
    filter_by_lever,
    lever_length,
    lever_lengths,
    lever_series,
    retention_report,
    rolling_std,
)
from ftsterrain.errors import ConfigError, FrameError
from ftsterrain.telemetry import Frame, Position, WHEELS

from conftest import make_fts


def series_from(L, fx=10.0, t=None, pos=Position.FL):
    L = np.asarray(L, dtype=float)
    fx = np.broadcast_to(np.asarray(fx, dtype=float), L.shape).copy()
    t = np.arange(L.size) * 0.01 if t is None else np.asarray(t, dtype=float)
    ty = fx * L
    Ls = lever_lengths(fx, ty)
    return LeverSeries(pos, t, fx, ty, Ls, ~np.isnan(Ls))


def test_geometry():
    g = WheelGeometry()
    assert g.L_min == 0.10 and g.L_max == pytest.approx(0.175, abs=1e-15)
    with pytest.raises(ConfigError):
        WheelGeometry(0.0, 0.15)


def test_lever_length_examples():
    assert lever_length(10, 1.5) == pytest.approx(0.15, abs=1e-15)
    assert lever_length(0, 2) is None
    assert lever_length(-10, -1) == pytest.approx(0.10, abs=1e-15)
    assert lever_length(0.4, 1.0) is None
    assert lever_length(EPS_FORCE, 0.05) == pytest.approx(0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 1e4), st.floats(0, 1.0), st.booleans())
def test_lever_round_trip_and_sign_invariance(fx, L0, neg):
    fx = -fx if neg else fx
    assert abs(lever_length(fx, fx * L0) - L0) <= 1e-12
    assert lever_length(fx, fx * L0) == lever_length(-fx, -fx * L0)


def test_filter_boundaries():
    g = WheelGeometry()
    s = series_from([0.20, 0.20, 0.05, 0.20])
    assert filter_by_lever(s, g, 0.05).valid[0]
    assert not filter_by_lever(s, g, 0.02).valid[0]
    # exactly L_min - tol is inside the closed band
    assert filter_by_lever(s, g, 0.05).valid[2]
    with pytest.raises(ConfigError):
        filter_by_lever(s, g, -0.01)


def test_filter_keeps_values_and_points():
    s = series_from(np.linspace(0, 0.4, 50), fx=np.linspace(-20, 20, 50))
    f = filter_by_lever(s, WheelGeometry(), 0.01)
    assert len(f) == len(s)
    assert np.array_equal(f.fx, s.fx) and np.array_equal(f.ty, s.ty)
    assert not np.any(f.valid & np.isnan(f.L))


def test_min_abs_fx_flag():
    s = series_from([0.15, 0.15], fx=[1.0, 20.0])
    f = filter_by_lever(s, WheelGeometry(), 0.05, min_abs_fx=5.0)
    assert list(f.valid) == [False, True]


def test_retention_constant_L():
    series = {w: series_from(np.full(100, 0.14), pos=w) for w in WHEELS}
    for r in retention_report(series):
        assert r.total == 100.0 and all(v == 100.0 for v in r.per_wheel.values())


def test_retention_absent_wheel_and_undefined_points():
    s = series_from([0.15, 0.15, 0.15, 0.15], fx=[10, 10, 0.1, 10])
    reps = retention_report({Position.FL: s}, tolerances=(0.05,))
    assert reps[0].per_wheel[Position.FL] == 75.0
    assert reps[0].per_wheel[Position.BR] is None
    assert reps[0].total == 75.0
    with pytest.raises(ConfigError):
        retention_report({})


def test_retention_uniform_oracle():
    # measure of [L_min - tol, L_max + tol] inside [0, 0.35], as a percentage
    expected = {0.05: 50.0, 0.02: 32.857142857142854, 0.01: 27.142857142857142}
    L = np.random.default_rng(0).uniform(0, 0.35, size=200_000)
    reps = retention_report({Position.CL: series_from(L)}, tolerances=tuple(expected))
    for r in reps:
        assert abs(r.total - expected[r.tolerance]) <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_retention_monotone(seed):
    rng = np.random.default_rng(seed)
    series = {w: series_from(rng.uniform(0, 0.4, 200), fx=rng.normal(0, 5, 200), pos=w) for w in WHEELS[:3]}
    reps = retention_report(series, tolerances=(0.0, 0.01, 0.02, 0.05, 0.1))
    for w in WHEELS[:3]:
        vals = [r.per_wheel[w] for r in reps]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_lever_series_requires_rover_frame():
    raw = make_fts("fr", [0, 1], Frame.RAW, fx=[1, 2], ty=[0.1, 0.2])
    with pytest.raises(FrameError):
        lever_series(raw)


def test_rolling_std_matches_direct():
    rng = np.random.default_rng(1)
    t = np.sort(rng.uniform(0, 5, 300))
    x = rng.normal(size=300)
    r = rolling_std(t, x, 1.0)
    for i in (0, 57, 150, 299):
        sel = np.abs(t - t[i]) <= 0.5
        assert r[i] == pytest.approx(np.std(x[sel]), abs=1e-9)


def test_stable_constant_series():
    t = np.arange(0, 3001) * 0.01
    assert detect_stable_intervals(series_from(np.full(t.size, 0.15), t=t), 5.0) == [(0.0, 30.0)]


def test_stable_alternating_validity():
    s = series_from(np.full(2000, 0.15), fx=np.tile([10.0, 0.0], 1000))
    assert detect_stable_intervals(s) == []


def test_stable_piecewise():
    rng = np.random.default_rng(2)
    t = np.arange(0, 3000) * 0.01
    L = np.full(t.size, 0.15)
    noisy = (t >= 10) & (t < 20)
    L[noisy] += rng.normal(0, 0.05, noisy.sum())
    s = filter_by_lever(series_from(np.abs(L), t=t), WheelGeometry(), 0.05)
    iv = detect_stable_intervals(s, 5.0, 0.01)
    assert len(iv) == 2
    # edges are located to within half the rolling window
    assert iv[0][0] == 0.0 and abs(iv[0][1] - 10.0) <= 0.5
    assert abs(iv[1][0] - 20.0) <= 0.5 and iv[1][1] == t[-1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_stable_intervals_properties(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(0, 2000) * 0.01
    L = 0.14 + np.repeat(rng.uniform(0, 0.03, 20), 100) * rng.normal(size=2000)
    s = filter_by_lever(series_from(L, t=t), WheelGeometry(), 0.02)
    loose = detect_stable_intervals(s, 2.0, 0.02)
    tight = detect_stable_intervals(s, 2.0, 0.005)
    for a, b in loose + tight:
        inside = (t >= a) & (t <= b)
        assert s.valid[inside].all()
    cover = lambda ivs: sum(b - a for a, b in ivs)
    assert cover(tight) <= cover(loose) + 1e-9
    starts = [a for a, _ in loose]
    assert starts == sorted(starts)


def test_drawbar_estimates():
    t = np.arange(0, 1000) * 0.01
    s = series_from(np.full(1000, 0.15), fx=10.0, t=t)
    (e,) = drawbar_estimate(s, [(0.0, 9.99)])
    assert (e.mean_fx, e.std_fx) == (10.0, 0.0)
    s2 = series_from(np.full(1000, 0.15), fx=np.tile([5.0, 15.0], 500), t=t)
    (e2,) = drawbar_estimate(s2, [(0.0, 9.99)])
    assert (e2.mean_fx, e2.std_fx) == (10.0, 5.0)
    with pytest.warns(UserWarning):
        assert drawbar_estimate(s, [(50.0, 60.0)]) == []
