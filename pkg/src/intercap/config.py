"""Shared numerical knobs for the solvers and samplers."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and size limits used across the package.

    The defaults are tuned for d = 3 desk-scale runs; every field can be
    overridden per call.  ``guard_gamma`` scales the kill radius of sampled
    walks with the window radius, ``guard_floor`` keeps that radius useful
    for very small windows.
    """

    # discrete potential theory
    green_rel_tol: float = 1e-6          # target accuracy of tabulated Green values
    equilibrium_residual_tol: float = 1e-8
    dense_solver_limit: int = 2000       # above this, switch to FFT-applied CG
    cg_max_iter: int = 5000
    equilibrium_max_support: int = 500_000
    hitting_cross_tol: float = 1e-4      # solve route vs last-exit route

    # interlacement sampling
    guard_gamma: float = 4.0
    guard_floor: int = 32
    max_steps_per_trajectory: int = 2_000_000_000

    # continuum capacity
    colloc_near_factor: float = 3.0      # panel pairs closer than this (in panel sides)
    colloc_near_subdiv: int = 4          # ... get a subdivided midpoint rule
    colloc_panel_limit: int = 12000      # dense-solve memory guard
    wos_escape_factor: float = 8.0       # escape radius in units of shape diameter
    wos_eps_factor: float = 1e-4         # absorption shell in units of shape diameter
    wos_start_factor: float = 1.5        # launch sphere in units of circumradius

    # coarse graining
    partition_K: int = 2
    partition_L_min: int = 3
    strict_scale_regime: bool = False    # enforce the asymptotic-regime bounds on N, K
    classify_pad_factor: float = 3.0     # escape-solve window in units of box radius

    def with_(self, **kw):
        return replace(self, **kw)


DEFAULT = SolverConfig()
