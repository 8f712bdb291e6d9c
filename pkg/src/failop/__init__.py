"""Deterministic driving-scenario simulator with redundant perception paths,
runtime consistency/anomaly monitors, a fail-operational reactor, triggered
incident recording, and a remote operator service."""

__version__ = "0.1.0"

# register every record type with the codec (decoding is registry-driven)
from . import scene, sim, perception, fallback, function_monitor  # noqa: E402,F401
from . import anomaly, reactor, ccc  # noqa: E402,F401
