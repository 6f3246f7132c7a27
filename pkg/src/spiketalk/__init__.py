"""Event-driven spiking coordination of droop-controlled DC microgrids."""

from .engine import Scenario, TimedEvent, TraceRecord, compare_baseline, run
from .scenario_file import ScenarioError, load_scenario, parse_scenario

__all__ = ["Scenario", "TimedEvent", "TraceRecord", "compare_baseline", "run",
           "ScenarioError", "load_scenario", "parse_scenario"]
__version__ = "0.1.0"
