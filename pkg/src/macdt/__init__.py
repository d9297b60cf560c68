"""Multi-agent coverage control on grid graphs with GP-UCB learning and
doubling-trick episodes."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .graph import CoverageModel, GridGraph, build_grid
from .gp import GpState, Kernel, RewardField
from .simulator import Environment, RunTrace, simulate

__all__ = [
    "BACKEND",
    "CoverageModel",
    "Environment",
    "GpState",
    "GridGraph",
    "Kernel",
    "RewardField",
    "RunTrace",
    "build_grid",
    "simulate",
]
