"""Successive convex approximation drivers.

``run_sca`` iterates convex conic subproblems built from a problem's convex
constraints and its anchored surrogates. ``run_sca_proximal`` adds a
proximal term when plain descent stalls, and ``find_feasible`` drives a
penalised slack to zero from an arbitrary start.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .conic import (
    ConeBlock, ConicProgram, QuadraticForm, SolverSettings, Status, quad_epigraph, solve,
)

__all__ = [
    "QuadConstraint", "ConeConstraint", "ScaProblem", "ScaConfig", "IterRecord", "ScaTrace",
    "ScaError", "InfeasibleStart", "SubproblemFailure", "FeasibilityNotReached",
    "run_sca", "run_sca_proximal", "find_feasible", "solve_subproblem", "stationarity_gap",
]


class ScaError(RuntimeError):
    pass


class InfeasibleStart(ScaError):
    """The start point violates the constraints; use :func:`find_feasible` first."""


class SubproblemFailure(ScaError):
    def __init__(self, status, message=""):
        super().__init__(f"subproblem solve failed with status {status}. {message}".strip())
        self.status = status


class FeasibilityNotReached(ScaError):
    def __init__(self, q: float, trace=None):
        super().__init__(f"slack stayed at q={q:.3e} after the iteration cap")
        self.q = q
        self.trace = trace


# ---------------------------------------------------------------------------
# convex constraints
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class QuadConstraint:
    """Convex constraint ``h(v) <= bound(v)`` with ``bound`` affine (zero by default)."""

    h: QuadraticForm
    bound: QuadraticForm | None = None
    relaxable: bool = True
    name: str = ""

    def __post_init__(self):
        if self.bound is None:
            object.__setattr__(self, "bound", QuadraticForm.constant_form(self.h.n, 0.0))

    def value(self, v) -> float:
        return self.h(v) - self.bound(v)

    def scale(self, v) -> float:
        return 1.0 + abs(self.h(v)) + abs(self.bound(v))

    def violation(self, v) -> float:
        return self.value(v) / self.scale(v)

    def blocks(self, width: int, slack: int | None = None) -> list:
        bound = self.bound.pad(width)
        if slack is not None:
            bound = bound + QuadraticForm.variable(width, slack)
        return quad_epigraph(self.h.pad(width), bound)


@dataclass(frozen=True, eq=False)
class ConeConstraint:
    """Fixed cone blocks, never relaxed."""

    cone_blocks: tuple
    name: str = ""
    relaxable = False

    def value(self, v) -> float:
        return max(b.violation(v) for b in self.cone_blocks)

    def violation(self, v) -> float:
        scale = 1.0 + max(np.linalg.norm(b.value(v)) for b in self.cone_blocks)
        return self.value(v) / scale

    def blocks(self, width: int, slack: int | None = None) -> list:
        return [b.pad(width) for b in self.cone_blocks]


# ---------------------------------------------------------------------------
# problem, config, trace
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class ScaProblem:
    """Minimise a convex ``objective`` subject to convex constraints and
    nonconvex constraints represented by anchored surrogates.

    Parameters
    ----------
    n : int
        Number of real variables.
    objective : QuadraticForm
        Convex objective (affine or PSD quadratic).
    constraints : list
        :class:`QuadConstraint` or :class:`ConeConstraint` items.
    surrogates : list
        Surrogates for the nonconvex constraints, anchored anywhere; the
        drivers re-anchor them at the start point.
    tighten : callable, optional
        Map ``v -> v'`` that sets epigraph and slack variables to their
        tightest feasible values without changing the decision variables.
    anchor_map : callable, optional
        Replaces the default update ``[s.reanchor(v) for s in surrogates]``.
    metric : callable, optional
        Application-level objective reported by the harness.
    """

    n: int
    objective: QuadraticForm
    constraints: list = field(default_factory=list)
    surrogates: list = field(default_factory=list)
    tighten: Callable | None = None
    anchor_map: Callable | None = None
    metric: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.objective.n != self.n:
            raise ValueError("objective dimension does not match the variable count")

    def f0(self, v) -> float:
        return self.objective(v)

    def anchor(self, v, surrogates=None) -> list:
        surrogates = self.surrogates if surrogates is None else surrogates
        if self.anchor_map is not None:
            return list(self.anchor_map(v, surrogates))
        return [s.reanchor(v) for s in surrogates]

    def refine(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.tighten(v.copy()) if self.tighten is not None else v

    def feasibility(self, v) -> float:
        """Largest normalised value over all constraint functions."""
        vals = [c.violation(v) for c in self.constraints]
        vals += [s.violation(v) for s in self.surrogates]
        return max(vals) if vals else -np.inf

    def max_violation(self, v) -> float:
        return max(0.0, self.feasibility(v))


@dataclass
class ScaConfig:
    """Knobs for the SCA drivers."""

    window: int = 5
    tol: float = 1e-3
    relative: bool = False
    max_iter: int = 200
    proximal_weight: float | None = None
    lam0: float = 1.0
    lam_growth: float = 10.0
    lam_max: float = 1e6
    shared_slack: bool = True
    feas_max_iter: int = 50
    feas_tol: float = 1e-6
    start_tol: float = 1e-6
    monotone_tol: float = 1e-6
    accept_residual: float = 1e-5
    max_safeguard: int = 40
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.tol <= 0 or self.feas_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lam0 <= 0 or self.lam_growth < 1:
            raise ValueError("slack penalty must be positive and nondecreasing")


@dataclass
class IterRecord:
    iteration: int
    objective: float
    violation: float
    slack: float | None
    status: str
    solve_time: float
    point: np.ndarray
    proximal: bool = False
    bound_gap: float = np.inf
    note: str = ""


@dataclass
class ScaTrace:
    records: list = field(default_factory=list)
    stop_reason: str = ""
    nonmonotone: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def append(self, rec: IterRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def violations(self) -> np.ndarray:
        return np.array([r.violation for r in self.records])

    @property
    def slacks(self) -> np.ndarray:
        return np.array([np.nan if r.slack is None else r.slack for r in self.records])

    @property
    def points(self) -> list:
        return [r.point for r in self.records]

    @property
    def solve_time(self) -> float:
        return float(sum(r.solve_time for r in self.records))

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    def extend(self, other: "ScaTrace"):
        off = len(self.records)
        skip = 1 if off and other.records and other.records[0].iteration == 0 else 0
        for r in other.records[skip:]:
            self.records.append(replace(r, iteration=off))
            off += 1
        self.nonmonotone += other.nonmonotone
        self.warnings += other.warnings
        self.stop_reason = other.stop_reason


# ---------------------------------------------------------------------------
# subproblem assembly
# ---------------------------------------------------------------------------
def _build(problem: ScaProblem, surrogates, *, prox=None, slack_mode=None, lam=0.0,
           q_cap=None):
    """Assemble the conic subproblem.

    Returns the program and a dict of extra variable indices.
    """
    n = problem.n
    obj = problem.objective
    width = n
    extra = {}
    if not obj.is_affine:
        extra["t_obj"] = width
        width += 1
    if prox is not None:
        extra["t_prox"] = width
        width += 1
    relaxed_c = [i for i, c in enumerate(problem.constraints) if slack_mode and c.relaxable]
    relaxed_s = [j for j, s in enumerate(surrogates) if slack_mode and s.relaxable]
    slack_of = {}
    if slack_mode == "shared":
        extra["q"] = [width]
        for i in relaxed_c:
            slack_of[("c", i)] = width
        for j in relaxed_s:
            slack_of[("s", j)] = width
        width += 1
    elif slack_mode == "each":
        qs = []
        for key in [("c", i) for i in relaxed_c] + [("s", j) for j in relaxed_s]:
            slack_of[key] = width
            qs.append(width)
            width += 1
        extra["q"] = qs

    c = np.zeros(width)
    blocks = []
    if obj.is_affine:
        c[:n] = obj.coef
    else:
        c[extra["t_obj"]] = 1.0
        blocks += quad_epigraph(obj.pad(width), QuadraticForm.variable(width, extra["t_obj"]))
    if prox is not None:
        alpha, center = prox
        F = np.zeros((n, width))
        F[:, :n] = np.sqrt(alpha) * np.eye(n)
        shift = -np.sqrt(alpha) * np.asarray(center, dtype=float)
        quad = QuadraticForm.from_residual(F, shift)
        blocks += quad_epigraph(quad, QuadraticForm.variable(width, extra["t_prox"]))
        c[extra["t_prox"]] = 1.0
    for i, con in enumerate(problem.constraints):
        blocks += con.blocks(width, slack_of.get(("c", i)))
    for j, sur in enumerate(surrogates):
        at = np.zeros(width)
        at[:n] = sur.point
        blocks += [b.balanced(at) for b in sur.blocks(width, slack_of.get(("s", j)))]
    for k, qi in enumerate(extra.get("q", [])):
        c[qi] = lam
        row = np.zeros((1, width))
        row[0, qi] = 1.0
        blocks.append(ConeBlock(row, [0.0], "nonneg"))
        if q_cap is not None:
            blocks.append(ConeBlock(-row, [q_cap[k]], "nonneg"))
    return ConicProgram(width, c, blocks), extra


def _accepted(res, cfg: ScaConfig):
    if res.status == Status.OPTIMAL:
        return True, ""
    if (res.status in (Status.MAX_ITERATIONS, Status.NUMERICAL_ERROR)
            and max(res.primal_residual, res.dual_residual) <= cfg.accept_residual
            and abs(res.gap) <= cfg.accept_residual * (1.0 + abs(res.objective))):
        return True, f"accepted {res.status} iterate with residuals <= {cfg.accept_residual:g}"
    return False, ""


def solve_subproblem(problem: ScaProblem, surrogates, cfg: ScaConfig, **kw):
    """Build and solve one subproblem, tightening surrogates that fail to bound.

    Returns ``(result, extra, surrogates, elapsed, note)``.
    """
    elapsed = 0.0
    note = ""
    for _ in range(cfg.max_safeguard + 1):
        prog, extra = _build(problem, surrogates, **kw)
        t0 = time.perf_counter()
        res = solve(prog, cfg.solver)
        elapsed += time.perf_counter() - t0
        ok, note = _accepted(res, cfg)
        if not ok:
            raise SubproblemFailure(res.status)
        v = res.x[:problem.n]
        fixed = [s.safeguard(v) for s in surrogates]
        if all(f is None for f in fixed):
            return res, extra, surrogates, elapsed, note
        surrogates = [s if f is None else f for s, f in zip(surrogates, fixed)]
    raise SubproblemFailure(res.status, "surrogate safeguard did not settle")


def _bound_gap(surrogates, v) -> float:
    if not surrogates:
        return np.inf
    return min(s.value(v) - s.original(v) for s in surrogates)


# ---------------------------------------------------------------------------
# Algorithm 1
# ---------------------------------------------------------------------------
def _stopped(objs: Sequence[float], cfg: ScaConfig) -> bool:
    if len(objs) <= cfg.window:
        return False
    change = abs(objs[-1] - objs[-1 - cfg.window])
    if cfg.relative:
        change /= max(1.0, abs(objs[-1]))
    return change < cfg.tol


def _run(problem: ScaProblem, x0, cfg: ScaConfig, proximal: bool):
    v = problem.refine(x0)
    viol = problem.feasibility(v)
    if viol > cfg.start_tol:
        raise InfeasibleStart(
            f"start point violates constraints by {viol:.3e}; run find_feasible first")
    surrogates = problem.anchor(v)
    trace = ScaTrace()
    f_prev = problem.f0(v)
    trace.append(IterRecord(0, f_prev, max(viol, 0.0), None, "initial", 0.0, v.copy(),
                            bound_gap=_bound_gap(surrogates, v)))
    alpha = 0.0
    if proximal:
        alpha = cfg.proximal_weight
        if alpha is None:
            alpha = 1e-4 * max(abs(f_prev), 1.0) if f_prev != 0 else 1e-4
    objs = [f_prev]
    trace.stop_reason = "iteration cap"
    for it in range(1, cfg.max_iter + 1):
        res, extra, used, elapsed, note = solve_subproblem(problem, surrogates, cfg)
        v_new = problem.refine(res.x[:problem.n])
        f_new = problem.f0(v_new)
        used_prox = False
        if alpha > 0:
            step = float(np.sum((v_new - v) ** 2))
            if f_prev - f_new < alpha * step:
                res, extra, used, t2, note = solve_subproblem(
                    problem, surrogates, cfg, prox=(alpha, v))
                elapsed += t2
                v_new = problem.refine(res.x[:problem.n])
                f_new = problem.f0(v_new)
                used_prox = True
        if f_new > f_prev + cfg.monotone_tol and cfg.solver.backend == "auto":
            # an inexact subproblem solve can break descent; retry once with the IPM
            ipm = replace(cfg, solver=replace(cfg.solver, backend="ipm"))
            kw = {"prox": (alpha, v)} if used_prox else {}
            try:
                r2, e2, u2, t2, n2 = solve_subproblem(problem, surrogates, ipm, **kw)
            except SubproblemFailure:
                r2 = None
            if r2 is not None:
                elapsed += t2
                v2 = problem.refine(r2.x[:problem.n])
                if problem.f0(v2) < f_new:
                    res, extra, used, v_new, f_new = r2, e2, u2, v2, problem.f0(v2)
                    note = "; ".join(filter(None, [n2, "re-solved with ipm after an increase"]))
        if note:
            trace.warnings.append(f"iteration {it}: {note}")
        if f_new > f_prev + cfg.monotone_tol:
            trace.nonmonotone.append(it)
            warnings.warn(f"objective increased by {f_new - f_prev:.3e} at iteration {it}",
                          RuntimeWarning, stacklevel=3)
        trace.append(IterRecord(it, f_new, problem.max_violation(v_new), None,
                                str(res.status), elapsed, v_new.copy(), used_prox,
                                _bound_gap(used, v_new), note))
        objs.append(f_new)
        v, f_prev = v_new, f_new
        surrogates = problem.anchor(v, used)
        if _stopped(objs, cfg):
            trace.stop_reason = "window"
            break
    return v, trace


def run_sca(problem: ScaProblem, x0, config: ScaConfig | None = None):
    """Algorithm 1 from a feasible start.

    Returns
    -------
    (v, trace)
        Final point and the per-iteration trace. Iteration 0 is the start.
    """
    return _run(problem, np.asarray(x0, dtype=float), config or ScaConfig(), proximal=False)


def run_sca_proximal(problem: ScaProblem, x0, config: ScaConfig | None = None):
    """Algorithm 1 with the proximal term ``alpha ||x - x_prev||^2`` engaged
    whenever an iteration fails the descent bound ``alpha ||dx||^2``.
    """
    return _run(problem, np.asarray(x0, dtype=float), config or ScaConfig(), proximal=True)


def stationarity_gap(problem: ScaProblem, v, config: ScaConfig | None = None) -> float:
    """Infinity-norm move of one more iteration anchored at ``v``."""
    cfg = config or ScaConfig()
    v = np.asarray(v, dtype=float)
    res, *_ = solve_subproblem(problem, problem.anchor(v), cfg)
    return float(np.max(np.abs(problem.refine(res.x[:problem.n]) - v)))


# ---------------------------------------------------------------------------
# Algorithm 2
# ---------------------------------------------------------------------------
def _raw_excess(problem: ScaProblem, surrogates, v, slack_mode) -> list:
    """Per-slack value ``max(0, f(v))`` over the relaxed constraints."""
    vals = [max(0.0, c.value(v)) for c in problem.constraints if c.relaxable]
    vals += [max(0.0, s.original(v)) for s in surrogates if s.relaxable]
    if slack_mode == "shared":
        return [max(vals) if vals else 0.0]
    return vals


def find_feasible(problem: ScaProblem, x0, config: ScaConfig | None = None):
    """Algorithm 2: penalised slack iterations from an arbitrary start.

    Each iteration solves ``min f0 + lam q`` with relaxed constraints
    ``f_i <= q`` and ``F_j <= q``. The penalty grows geometrically and the
    slack is capped by its previous value so that it never increases.

    Returns ``(v, trace)`` at the first iterate with ``q <= feas_tol``.
    Raises :class:`FeasibilityNotReached` otherwise.
    """
    cfg = config or ScaConfig()
    v = np.asarray(x0, dtype=float)
    mode = "shared" if cfg.shared_slack else "each"
    trace = ScaTrace()
    surrogates = problem.anchor(v)
    viol = problem.max_violation(v)
    if viol <= cfg.feas_tol:
        trace.append(IterRecord(0, problem.f0(v), viol, 0.0, "initial", 0.0, v.copy()))
        trace.stop_reason = "feasible start"
        return problem.refine(v), trace
    q0 = _raw_excess(problem, surrogates, v, mode)
    trace.append(IterRecord(0, problem.f0(v), viol, float(max(q0)), "initial", 0.0, v.copy()))
    lam = cfg.lam0
    q_cap = None
    q = max(q0)
    for it in range(1, cfg.feas_max_iter + 1):
        res, extra, used, elapsed, note = solve_subproblem(
            problem, surrogates, cfg, slack_mode=mode, lam=lam, q_cap=q_cap)
        v = res.x[:problem.n]
        qs = np.maximum(res.x[extra["q"]], 0.0)
        q = float(qs.max()) if qs.size else 0.0
        if note:
            trace.warnings.append(f"iteration {it}: {note}")
        trace.append(IterRecord(it, problem.f0(v), problem.max_violation(v), q,
                                str(res.status), elapsed, v.copy(), note=note))
        if q <= cfg.feas_tol:
            trace.stop_reason = "feasible"
            return problem.refine(v), trace
        q_cap = list(qs)
        lam = min(lam * cfg.lam_growth, cfg.lam_max)
        surrogates = problem.anchor(v, used)
    trace.stop_reason = "iteration cap"
    raise FeasibilityNotReached(q, trace)
