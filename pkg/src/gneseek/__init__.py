"""Generalized Nash equilibrium seeking with hybrid adaptive dual gains and extremum seeking."""

from .errors import *  # noqa: F401,F403
from .game import Game, KktPoint, kkt_residual, pseudogradient, solve_kkt_oracle  # noqa: F401
from .hybrid import HybridArc, HybridSystem, IntegrationOptions, integrate  # noqa: F401

__version__ = "0.1.0"
