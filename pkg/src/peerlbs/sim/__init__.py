from .config import InvalidConfig, SimConfig, load_config
from .engine import Simulation, run, run_mobicrowd_baseline, simulate
from .mobility import TraceParseError

__all__ = ["InvalidConfig", "SimConfig", "Simulation", "TraceParseError", "load_config", "run",
           "run_mobicrowd_baseline", "simulate"]
