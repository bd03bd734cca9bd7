"""Terrain classification from rover wheel force-torque and IMU telemetry.

Modules: ``telemetry`` (ingestion, frames, labels), ``windows`` (window
features), ``svm`` and ``mlp`` (classifiers), ``drawbar`` (lever-length
filtering), ``synth`` (synthetic data), ``report`` (tables and charts) and
``cli`` (the ``ftsterrain`` command).
"""

__version__ = "0.1.0"
