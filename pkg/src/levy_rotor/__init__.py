"""Kicked rotor at quantum resonance under Lévy-timed momentum measurements."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("levy-rotor")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .analysis import fit_power_law, predicted_variance, theoretical_exponent
from .bessel import bessel_j, build_kernel, kernel_moments
from .engine import (
    EnsembleConfig,
    propagate_master,
    run_ensemble,
    run_trajectory,
    schedule_variance,
    synthetic_kernel,
)
from .levy import LevyParams, censored_moment, inverse_cdf, sample_interval
from .unitary import ResonanceParams, WaveFunction, apply_kick, evolve, measure_momentum

__all__ = [
    "__version__",
    "bessel_j",
    "build_kernel",
    "kernel_moments",
    "ResonanceParams",
    "WaveFunction",
    "apply_kick",
    "evolve",
    "measure_momentum",
    "LevyParams",
    "inverse_cdf",
    "sample_interval",
    "censored_moment",
    "EnsembleConfig",
    "run_trajectory",
    "run_ensemble",
    "propagate_master",
    "schedule_variance",
    "synthetic_kernel",
    "theoretical_exponent",
    "predicted_variance",
    "fit_power_law",
]
