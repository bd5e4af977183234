"""Move-to-front ranking dynamics and their deterministic large-N limit."""

from .limit import BoundaryError, LimitField, RateDistribution, RegimeError
from .measures import (
    GammaComponent,
    InitialProfile,
    JumpRateLaw,
    Stratum,
    profile_tail_integral,
    sample_rates_and_positions,
)
from .simulator import (
    EmpiricalSnapshot,
    SystemState,
    default_backend,
    init,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryError",
    "EmpiricalSnapshot",
    "GammaComponent",
    "InitialProfile",
    "JumpRateLaw",
    "LimitField",
    "RateDistribution",
    "RegimeError",
    "Stratum",
    "SystemState",
    "default_backend",
    "init",
    "profile_tail_integral",
    "sample_rates_and_positions",
    "__version__",
]
