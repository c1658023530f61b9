"""Executable calculus of generalized Young measures on discretized domains.

Submodules
----------
space      cell-partitioned domains
homfn      one-homogeneous test functions and combinators
gym        discrete measures, lifts, pairings, decomposition
systems    time-indexed compatible systems, variation, derivatives
approx     step-function approximation, oscillation paths, extraction
io         JSON documents with decimal-string numerics
cli        scenario-driven command line front end
"""

from .gym import (
    Battery,
    DiscreteGYM,
    DiscreteMeasure,
    barycentre,
    decompose,
    lift_measure,
    norm_star,
    pair,
    recompose,
    standard_battery,
    validate,
    wstar_gap,
)
from .space import Interval
from .systems import SystemGYM, TimeGrid, ac_modulus, derivative_estimate, variation

__version__ = "0.1.0"

__all__ = [
    "Battery", "DiscreteGYM", "DiscreteMeasure", "Interval", "SystemGYM", "TimeGrid",
    "ac_modulus", "barycentre", "decompose", "derivative_estimate", "lift_measure",
    "norm_star", "pair", "recompose", "standard_battery", "validate", "variation", "wstar_gap",
]
