"""Numerical laboratory for non-uniformly hyperbolic volume-preserving maps."""
__version__ = "0.1.0"
