"""Stability of Ramsey atomic clocks that feed a coherent-state readout forward
into one or more spin-squeezed ensembles, under 1/f local-oscillator noise."""

from .analytics import cascade_plan, phase_variance_hybrid, sigma2_formula
from .clock_engine import ClockConfig, make_config, run_trajectory
from .noise_lo import NoiseSpec, synthesize_flicker
from .spin_ensemble import EnsembleSpec, analytic_moments
from .stability import StabilityPoint, allan_variance

__version__ = "0.1.0"

__all__ = [
    "ClockConfig",
    "EnsembleSpec",
    "NoiseSpec",
    "StabilityPoint",
    "allan_variance",
    "analytic_moments",
    "cascade_plan",
    "make_config",
    "phase_variance_hybrid",
    "run_trajectory",
    "sigma2_formula",
    "synthesize_flicker",
]
