"""Simulation and optimal constant control of fBM-driven reflected workload models."""

__version__ = "0.1.0"

from .control import (AbelianReport, OptimizationResult, abelian_check, optimize_constrained,
                      optimize_discounted, optimize_ergodic, optimize_finite_horizon)
from .costs import (CostEstimate, CostFunctionSpec, discounted_cost, ergodic_cost_direct,
                    ergodic_cost_reduced, finite_horizon_cost, regulator_rate)
from .errors import (BracketError, ConfigError, DomainError, FbmQueueError, PreconditionError,
                     UnsupportedModelError)
from .fgn import SamplePath, SeedSpec, TimeGrid, fbm_path, generate_fgn
from .montecarlo import EstimateWithError, EstimatorConfig
from .onoff import OnOffSpec, hurst_from_tails, simulate_onoff_queue
from .skorokhod import ModelSpec, PositiveFunction, reflect, workload
from .stationary import estimate_G, sample_Zu, tail_slope, theta_star

__all__ = [
    "AbelianReport", "BracketError", "ConfigError", "CostEstimate", "CostFunctionSpec",
    "DomainError", "EstimateWithError", "EstimatorConfig", "FbmQueueError", "ModelSpec",
    "OnOffSpec", "OptimizationResult", "PositiveFunction", "PreconditionError", "SamplePath",
    "SeedSpec", "TimeGrid", "UnsupportedModelError", "abelian_check", "discounted_cost",
    "ergodic_cost_direct", "ergodic_cost_reduced", "estimate_G", "fbm_path",
    "finite_horizon_cost", "generate_fgn", "hurst_from_tails", "optimize_constrained",
    "optimize_discounted", "optimize_ergodic", "optimize_finite_horizon", "reflect",
    "regulator_rate", "sample_Zu", "simulate_onoff_queue", "tail_slope", "theta_star",
    "workload",
]
