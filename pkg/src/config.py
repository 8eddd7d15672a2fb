"""
Centralised configuration constants for stein-hmm.

All tunable tolerances and defaults live here so they can be adjusted in one
place instead of hunting through the estimator modules.
"""
from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class Config:
    """Immutable library-wide defaults. Override by creating a new instance."""

    # Model validation
    stochastic_tol: float = 1e-12
    stationary_tol: float = 1e-12
    stationary_max_iter: int = 100_000
    k_max_factor: int = 10  # k_max = factor * |S|^2

    # Estimators
    bootstrap_resamples: int = 200
    moment_orders: Tuple[float, ...] = (2.0, 3.0, 4.0)
    dkw_alpha: float = 0.01

    # Geometry
    default_point_budget: int = 4096
    nearest_index: str = 'kdtree'  # 'kdtree' | 'brute'
    brute_chunk: int = 2048

    # Experiment runner
    default_workers: int = 1
    log_level: str = 'INFO'

    # CLI exit codes
    exit_config_error: int = 2
    exit_runtime_error: int = 3


# Singleton used throughout the library.
config = Config()
