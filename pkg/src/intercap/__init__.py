"""Capacity and trajectory-soup toolkit for transient lattice walks."""

__version__ = "0.1.0"

from .coarse import CoarseGrainReport, census, classify_box, h_functional
from .config import DEFAULT, SolverConfig
from .continuum import (brownian_capacity, discrete_continuum_compare,
                        solve_panels, wos_capacity)
from .fcurve import f_curve, f_upper_bound, rate_predictions
from .green import GreenTable, default_table
from .interlace import (InterlacementSample, intersect,
                        local_time_functional, monotone_couple, sample)
from .lattice import GridShape, LatticeBox, LatticeSet, blow_up, filling
from .potential import (capacity, equilibrium_measure, hitting_field,
                        hitting_probability, relative_equilibrium_check)

__all__ = [
    "DEFAULT", "SolverConfig", "GreenTable", "default_table",
    "LatticeBox", "LatticeSet", "GridShape", "blow_up", "filling",
    "capacity", "equilibrium_measure", "hitting_field",
    "hitting_probability", "relative_equilibrium_check",
    "brownian_capacity", "solve_panels", "wos_capacity",
    "discrete_continuum_compare",
    "InterlacementSample", "sample", "monotone_couple", "intersect",
    "local_time_functional",
    "CoarseGrainReport", "census", "classify_box", "h_functional",
    "f_curve", "f_upper_bound", "rate_predictions",
    "__version__",
]
