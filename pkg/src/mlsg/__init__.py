"""Mixed-leadership stochastic differential game: Riccati solver, feedback
strategies, Monte Carlo verification and parameter sweeps."""

from .model import ConfigError, DomainError, ModelParams, TimeCurve, baseline
from .riccati import RiccatiSolution, TimeMesh, solve

__all__ = [
    "ConfigError",
    "DomainError",
    "ModelParams",
    "RiccatiSolution",
    "TimeCurve",
    "TimeMesh",
    "baseline",
    "solve",
]
__version__ = "0.1.0"
