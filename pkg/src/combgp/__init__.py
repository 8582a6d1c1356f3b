"""Combinatorial volatile Gaussian-process semi-bandits.

Exact and sparse GP learners, UCB / BUCB / Thompson-sampling indices,
an energy-efficient navigation environment with rectified shortest-path
routing, and calculators for the associated regret bounds.
"""

from .arms import BaseArm, SuperArm
from .errors import CombGPError, ConfigError, EnvError, InputError, NumericError, RoutingError

__version__ = "0.1.0"
