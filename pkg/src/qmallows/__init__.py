"""Mallows product measures, multi-species ASEP and the colored six-vertex model."""
from .qseries import LogProb, MallowsParams, TruncationError, TruncationPolicy
from .stats import EmpiricalDist, chi_square_gof, rate_ci, tv_distance

__all__ = ["LogProb", "MallowsParams", "TruncationError", "TruncationPolicy",
           "EmpiricalDist", "chi_square_gof", "rate_ci", "tv_distance"]
