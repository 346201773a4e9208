"""Steady-state cooling of degenerate mechanical modes in a nonlinear cavity."""

__version__ = "0.1.0"

from .model import (EffectiveParams, MeanFieldState, PhysicalParams, ValidationError,  # noqa: E402
                    drive_amplitude, effective_from_physical, validate)
from .meanfield import MeanFieldSolverConfig, solve_meanfield, sweep_meanfield  # noqa: E402
from .dynamics import (build_drift, build_noise, cooling_point, evolve_cooling,  # noqa: E402
                       is_stable, phonon_numbers)
from .darkmode import hybrid_params, is_dark, pairwise_dark_scan  # noqa: E402
from .sweep import SweepSpec, emit, find_peaks, preset, run_sweep  # noqa: E402
