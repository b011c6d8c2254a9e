"""Robust min-max solutions harvested from annealing and QAOA sample sets."""

from .errors import (
    DimensionError,
    EmptyHarvestError,
    InfeasibleError,
    RobustQError,
    SizeCapError,
    UnsupportedShapeError,
)
from .qubo import IsingProblem, QuboProblem, SampleSet, enumerate_optimum, evaluate
from .scenario import ScenarioSet

__version__ = "0.1.0"
