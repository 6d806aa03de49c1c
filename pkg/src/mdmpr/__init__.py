"""Mode-division multiplexed coherent-free receiver simulation.

Phase retrieval from two intensity traces per tributary, transfer-matrix
estimation, MIMO equalization and an experiment runner.
"""

from . import chanest, channel, dumpfile, frontend, mimodsp, retrieval, runner, sigcore, txgen
from .runner import ConfigError, ScenarioConfig, load_config, run_scenario, sweep

__all__ = [
    "sigcore",
    "txgen",
    "channel",
    "frontend",
    "retrieval",
    "chanest",
    "mimodsp",
    "dumpfile",
    "runner",
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "run_scenario",
    "sweep",
]

__version__ = "0.1.0"
