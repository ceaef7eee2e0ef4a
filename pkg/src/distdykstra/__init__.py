"""Distributed Dykstra iteration: dual block-coordinate ascent for

    min_x  sum_i [ 1/2 ||x - anchor_i||^2 + f_i(x) ]

over a graph, with proximable and subdifferentiable node functions.
"""

from .analysis import InvariantMonitor, RateFit, fit_rate, reference
from .core import (CapabilityError, ConsistencyError, DykstraError, PreconditionError,
                   StructuralError, UnsupportedScheduleError)
from .engine import DualState, RunHistory
from .instances import Instance, gen_nonsmooth, gen_smooth
from .schedule import Schedule, cyclic_schedule, star_schedule, time_varying_schedule
from .topology import Graph

__version__ = "0.1.0"

__all__ = [
    "CapabilityError", "ConsistencyError", "DualState", "DykstraError", "Graph", "Instance",
    "InvariantMonitor", "PreconditionError", "RateFit", "RunHistory", "Schedule",
    "StructuralError", "UnsupportedScheduleError", "cyclic_schedule", "fit_rate",
    "gen_nonsmooth", "gen_smooth", "reference", "star_schedule", "time_varying_schedule",
]
