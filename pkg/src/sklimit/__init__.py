"""Spectral-Galerkin simulation of the small-mass (Smoluchowski-Kramers) limit
for stochastic damped wave equations on an interval, with checks of the
semigroup identities, Lyapunov drifts and Wasserstein convergence of
stationary marginals."""

from .spectral import Domain, SpectralField, PhaseState
from .noise import NoiseSpectrum, SeededDriver
from .reaction import ReactionSpec
from .errors import BlowUpError, ConfigError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "SpectralField",
    "PhaseState",
    "NoiseSpectrum",
    "SeededDriver",
    "ReactionSpec",
    "BlowUpError",
    "ConfigError",
    "ValidationError",
]
