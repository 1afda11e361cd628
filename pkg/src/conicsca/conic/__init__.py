"""Conic quadratic programs: representation, lowering and solvers."""

from .program import (
    CONES, ConeBlock, ConicProgram, SolveResult, SolverSettings, Status,
    cone_violation, quad_epigraph, quad_over_lin,
)
from .quadform import QuadraticForm, embed_complex, stack_complex, unstack_complex
from .solve import BACKENDS, register_backend, solve

__all__ = [
    "CONES", "ConeBlock", "ConicProgram", "SolveResult", "SolverSettings", "Status",
    "cone_violation", "quad_epigraph", "quad_over_lin",
    "QuadraticForm", "embed_complex", "stack_complex", "unstack_complex",
    "BACKENDS", "register_backend", "solve",
]
