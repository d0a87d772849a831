"""RIS-aided terahertz link modelling: FTR fading, pointing error and molecular absorption,
Fox's H-function outage and capacity analytics, Monte-Carlo oracles, a swarm phase optimiser
and distribution fitting."""

from .errors import (ConfigError, CostGuardError, DegeneracyError, DomainError,
                     NonConvergenceError, RisThzError)
from .ftr import FtrParams
from .perf_metrics import HardwareProfile, SystemModel
from .thz_channel import Environment, LinkGeometry, Misalignment

__version__ = "0.1.0"
__all__ = ["ConfigError", "CostGuardError", "DegeneracyError", "DomainError", "Environment",
           "FtrParams", "HardwareProfile", "LinkGeometry", "Misalignment", "NonConvergenceError",
           "RisThzError", "SystemModel"]
