import numpy as np
import pytest

from ftsterrain import synth
from ftsterrain.telemetry import Frame, Position, SensorId, SensorKind, TelemetryStream
from ftsterrain.windows import build_samples


@pytest.fixture(scope="session")
def default_run():
    return synth.generate(synth.default_scenario())


@pytest.fixture(scope="session")
def default_samples(default_run):
    return build_samples(default_run.streams.values(), default_run.labels)


def make_fts(position, t, frame=Frame.ROVER, **chans):
    t = np.asarray(t, dtype=float)
    base = {c: np.zeros(t.size) for c in ("fx", "fy", "fz", "tx", "ty", "tz")}
    base.update({k: np.asarray(v, dtype=float) for k, v in chans.items()})
    return TelemetryStream(SensorId(SensorKind.FTS, Position(position)), t, base, frame)


def make_imu(t, frame=Frame.ROVER, **chans):
    t = np.asarray(t, dtype=float)
    base = {c: np.zeros(t.size) for c in ("ax", "ay", "az")}
    base.update({k: np.asarray(v, dtype=float) for k, v in chans.items()})
    return TelemetryStream(SensorId(SensorKind.IMU, Position.CHASSIS), t, base, frame)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
