"""Successive convex approximation with conic quadratic subproblems."""

__version__ = "0.1.0"
