"""Conic program representation and quadratic lowering."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .quadform import QuadraticForm

__all__ = [
    "CONES", "ConeBlock", "ConicProgram", "Status", "SolveResult", "SolverSettings",
    "quad_epigraph", "quad_over_lin", "cone_violation",
]

CONES = ("zero", "nonneg", "soc", "rsoc")
_MIN_DIM = {"zero": 1, "nonneg": 1, "soc": 2, "rsoc": 3}


@dataclass(frozen=True, eq=False)
class ConeBlock:
    """Constraint ``rows @ x + offset in K``.

    For ``soc`` the first entry bounds the norm of the rest. For ``rsoc``
    the slice ``(a, b, v)`` must satisfy ``2 a b >= ||v||^2`` with ``a, b >= 0``.
    """

    rows: np.ndarray
    offset: np.ndarray
    cone: str

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        off = np.asarray(self.offset, dtype=float).reshape(-1)
        if self.cone not in CONES:
            raise ValueError(f"unknown cone {self.cone!r}")
        if rows.shape[0] != off.size:
            raise ValueError(f"{rows.shape[0]} rows but {off.size} offsets")
        if off.size < _MIN_DIM[self.cone]:
            raise ValueError(f"{self.cone} block needs dimension >= {_MIN_DIM[self.cone]}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "offset", off)

    @property
    def dim(self) -> int:
        return self.offset.size

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def value(self, x) -> np.ndarray:
        return self.rows @ x + self.offset

    def pad(self, n: int) -> "ConeBlock":
        if n == self.width:
            return self
        if n < self.width:
            raise ValueError("cannot shrink a block")
        rows = np.zeros((self.dim, n))
        rows[:, :self.width] = self.rows
        return ConeBlock(rows, self.offset, self.cone)

    def violation(self, x) -> float:
        return cone_violation(self.value(x), self.cone)

    def balanced(self, x) -> "ConeBlock":
        """Same set with ``(a, b)`` rescaled to ``(a / k, b k)`` so that both
        are equal at ``x``. Keeps rotated cones well conditioned near ``x``;
        other cones and points with ``a b <= 0`` are returned unchanged."""
        if self.cone != "rsoc":
            return self
        a, b = self.value(x)[:2]
        if not (a > 0 and b > 0 and np.isfinite(a * b)):
            return self
        k = np.sqrt(a / b)
        rows, off = self.rows.copy(), self.offset.copy()
        rows[0] /= k
        off[0] /= k
        rows[1] *= k
        off[1] *= k
        return ConeBlock(rows, off, self.cone)


def cone_violation(s: np.ndarray, cone: str) -> float:
    """Distance-like violation of ``s in K``; nonpositive when inside."""
    if cone == "zero":
        return float(np.max(np.abs(s)))
    if cone == "nonneg":
        return float(np.max(-s))
    if cone == "soc":
        return float(np.linalg.norm(s[1:]) - s[0])
    a, b = s[0], s[1]
    p, q = (a + b) / np.sqrt(2.0), (a - b) / np.sqrt(2.0)
    return float(np.hypot(q, np.linalg.norm(s[2:])) - p)


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """Minimize ``objective @ x`` subject to a list of cone blocks."""

    n: int
    objective: np.ndarray
    blocks: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        if c.size != self.n:
            raise ValueError(f"objective has {c.size} entries, expected {self.n}")
        blocks = tuple(self.blocks)
        for i, blk in enumerate(blocks):
            if not isinstance(blk, ConeBlock):
                raise TypeError(f"block {i} is not a ConeBlock")
            if blk.width != self.n:
                raise ValueError(f"block {i} has width {blk.width}, expected {self.n}")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "blocks", blocks)

    def max_violation(self, x) -> float:
        if not self.blocks:
            return 0.0
        return max(b.violation(x) for b in self.blocks)

    def dual_objective(self, dual: list) -> float:
        return -sum(float(b.offset @ z) for b, z in zip(self.blocks, dual))


class Status(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_ERROR = "NumericalError"

    def __str__(self):
        return self.value


@dataclass
class SolverSettings:
    """Tolerances and iteration cap for :func:`conicsca.conic.solve`."""

    tol_feas: float = 1e-8
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-8
    max_iter: int = 200
    backend: str = "auto"
    verbose: bool = False


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    dual: list = field(default_factory=list)
    objective: float = np.nan
    primal_residual: float = np.inf
    dual_residual: float = np.inf
    gap: float = np.inf
    iterations: int = 0
    slacks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL

    def complementarity(self) -> float:
        """Largest ``|s_k^T z_k|`` over blocks."""
        if not self.slacks:
            return 0.0
        return max(abs(float(s @ z)) for s, z in zip(self.slacks, self.dual))


def _affine_parts(form: QuadraticForm, n: int):
    if not form.is_affine:
        raise ValueError("bound must be affine")
    if form.n != n:
        raise ValueError(f"bound has {form.n} variables, expected {n}")
    return form.coef, form.constant


def quad_epigraph(quad: QuadraticForm, bound: QuadraticForm) -> list:
    """Blocks feasible exactly when ``quad(x) <= bound(x)``.

    A quadratic ``||F x||^2 + 2 b^T x + c <= t`` becomes the rotated cone
    ``(t - 2 b^T x - c, 1/2, F x)``. An affine ``quad`` yields a single
    nonnegativity row.
    """
    if quad.complex_domain:
        raise ValueError("embed complex forms before lowering")
    n = quad.n
    t_coef, t_const = _affine_parts(bound, n)
    lin = t_coef - quad.coef
    const = t_const - quad.constant
    if quad.is_affine:
        return [ConeBlock(lin[None, :], [const], "nonneg")]
    rows = np.vstack([lin, np.zeros(n), quad.factor])
    off = np.concatenate([[const, 0.5], np.zeros(quad.rank)])
    return [ConeBlock(rows, off, "rsoc")]


def quad_over_lin(quad: QuadraticForm, denom: QuadraticForm,
                  bound: QuadraticForm) -> list:
    """Blocks for ``quad(x) / denom(x) <= bound(x)`` with ``denom > 0``.

    ``quad`` must read ``||F x + d||^2 + e`` with ``e >= 0`` so that the
    ratio is jointly convex. Encoded as the rotated cone
    ``(denom, bound / 2, F x + d, sqrt(e))``.
    """
    if quad.complex_domain:
        raise ValueError("embed complex forms before lowering")
    n = quad.n
    d_coef, d_const = _affine_parts(denom, n)
    t_coef, t_const = _affine_parts(bound, n)
    F, d, e = quad.as_residual()
    if e < -1e-12 * (1.0 + abs(quad.constant)):
        raise ValueError("ratio is not convex: negative constant remainder")
    e = max(e, 0.0)
    rows = [d_coef, t_coef / 2.0, *F]
    off = [d_const, t_const / 2.0, *d]
    if e > 0:
        rows.append(np.zeros(n))
        off.append(np.sqrt(e))
    if len(off) < 3:
        rows.append(np.zeros(n))
        off.append(0.0)
    return [ConeBlock(np.vstack(rows), off, "rsoc")]
