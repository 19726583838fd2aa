"""GPS single point positioning with stratospheric platforms as extra ranging sources."""

from .scenario import DataError, Scenario, ScenarioError, load_scenario
from .spp import PositionSolution, RangingMeasurement, SolverConfig, solve_epoch

__all__ = [
    "DataError",
    "PositionSolution",
    "RangingMeasurement",
    "Scenario",
    "ScenarioError",
    "SolverConfig",
    "load_scenario",
    "solve_epoch",
]
__version__ = "0.1.0"
