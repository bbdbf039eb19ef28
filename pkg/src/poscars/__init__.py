"""Predictive online service chaining and resource scheduling for NFV systems.

The simulator is slot-synchronous.  ``poscars.sim.run`` executes one
configuration; ``poscars.cli`` wraps it for the command line.
"""
from .config import DEFAULTS, SCHEMA_VERSION, load_config
from .kernels import BACKEND
from .metrics import RunSummary, SlotMetrics, drift_bound_B
from .scheduler import ControlParams, decide
from .sim import RunResult, Simulation, SimulationConfig, replicate, run
from .variants import ChainingStrategy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChainingStrategy", "ControlParams", "DEFAULTS", "RunResult", "RunSummary",
    "SCHEMA_VERSION", "Simulation", "SimulationConfig", "SlotMetrics", "decide", "drift_bound_B",
    "load_config", "replicate", "run",
]
