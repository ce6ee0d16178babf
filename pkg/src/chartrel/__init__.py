"""Reliability analysis of fault-annotated statechart composites.

Models are written in a small textual statechart language, executed in
lockstep cycles, driven by sampled hardware fault times, and analysed with
Monte Carlo, Weibull fitting and conditioning.  Exact CTMC and maximum
likelihood calculators serve as references.
"""

from .executor import Engine, EventInstance, SystemState
from .faults import FaultTable, load_fault_table
from .loader import Model, bundled_model_dir, load_model
from .presim import DEFAULT_SEED, run_batch, simulate

__version__ = "0.1.0"

__all__ = ["DEFAULT_SEED", "Engine", "EventInstance", "FaultTable", "Model", "SystemState",
           "bundled_model_dir", "load_fault_table", "load_model", "run_batch", "simulate"]
