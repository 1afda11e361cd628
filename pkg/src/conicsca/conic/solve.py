"""Solver entry point with pluggable backends."""

from __future__ import annotations

import numpy as np

from .ipm import solve_ipm
from .program import ConicProgram, SolveResult, SolverSettings, Status

__all__ = ["solve", "register_backend", "BACKENDS"]

BACKENDS = {"ipm": solve_ipm}


def register_backend(name: str, fn) -> None:
    """Register ``fn(prog, settings) -> SolveResult`` under ``name``."""
    BACKENDS[name] = fn


def _solve_auto(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    """Clarabel when importable, falling back to the reference IPM when it
    stalls or returns a point outside the cones; the IPM alone otherwise."""
    if not _have_clarabel():
        return solve_ipm(prog, settings)
    res = _solve_clarabel(prog, settings)
    if res.status == Status.OPTIMAL and _cone_error(prog, res.x) <= 10 * settings.tol_feas:
        return res
    if res.status not in (Status.OPTIMAL, Status.NUMERICAL_ERROR, Status.MAX_ITERATIONS):
        return res
    alt = solve_ipm(prog, settings)
    if res.status == Status.OPTIMAL:
        if alt.status == Status.OPTIMAL and _cone_error(prog, alt.x) < _cone_error(prog, res.x):
            return alt
        return res
    if alt.status == Status.OPTIMAL or _merit(alt) < _merit(res):
        return alt
    return res


def _cone_error(prog: ConicProgram, x) -> float:
    """Largest cone violation relative to the size of the block value."""
    x = np.asarray(x, dtype=float)
    if not prog.blocks or x.size != prog.n or not np.all(np.isfinite(x)):
        return np.inf if prog.blocks else 0.0
    return max(b.violation(x) / (1.0 + np.max(np.abs(b.value(x)))) for b in prog.blocks)


def _merit(res: SolveResult) -> float:
    rel = abs(res.gap) / (1.0 + abs(res.objective))
    m = max(res.primal_residual, res.dual_residual, rel)
    return m if np.isfinite(m) else np.inf


def _have_clarabel() -> bool:
    try:
        import clarabel  # noqa: F401
    except ImportError:
        return False
    return True


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Solve a conic program with the backend named in ``settings``.

    ``"auto"`` (the default) prefers Clarabel, ``"ipm"`` is the self-contained
    interior-point method and ``"clarabel"`` calls Clarabel only.
    """
    settings = settings or SolverSettings()
    try:
        fn = BACKENDS[settings.backend]
    except KeyError:
        raise ValueError(f"unknown solver backend {settings.backend!r}") from None
    return fn(prog, settings)


def _solve_clarabel(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    import clarabel
    import scipy.sparse as sp

    rows, rhs, cones = [], [], []
    r2 = np.sqrt(0.5)
    for blk in prog.blocks:
        R, o = blk.rows, blk.offset
        if blk.cone == "rsoc":
            R, o = R.copy(), o.copy()
            R[:2] = [r2 * (R[0] + R[1]), r2 * (R[0] - R[1])]
            o[:2] = [r2 * (o[0] + o[1]), r2 * (o[0] - o[1])]
        rows.append(-R)
        rhs.append(o)
        if blk.cone == "zero":
            cones.append(clarabel.ZeroConeT(blk.dim))
        elif blk.cone == "nonneg":
            cones.append(clarabel.NonnegativeConeT(blk.dim))
        else:
            cones.append(clarabel.SecondOrderConeT(blk.dim))
    A = sp.csc_matrix(np.vstack(rows)) if rows else sp.csc_matrix((0, prog.n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    P = sp.csc_matrix((prog.n, prog.n))
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iter
    opts.tol_feas = settings.tol_feas
    opts.tol_gap_abs = settings.tol_gap_abs
    opts.tol_gap_rel = settings.tol_gap_rel
    sol = clarabel.DefaultSolver(P, prog.objective, A, b, cones, opts).solve()
    name = str(sol.status)
    status = {
        "Solved": Status.OPTIMAL,
        "PrimalInfeasible": Status.PRIMAL_INFEASIBLE,
        "DualInfeasible": Status.DUAL_INFEASIBLE,
        "MaxIterations": Status.MAX_ITERATIONS,
        "AlmostSolved": Status.MAX_ITERATIONS,
    }.get(name, Status.NUMERICAL_ERROR)
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    s = np.asarray(sol.s)
    dual, slacks, k = [], [], 0
    for blk in prog.blocks:
        zz, ss = z[k:k + blk.dim].copy(), s[k:k + blk.dim].copy()
        if blk.cone == "rsoc":
            zz[:2] = [r2 * (zz[0] + zz[1]), r2 * (zz[0] - zz[1])]
            ss[:2] = [r2 * (ss[0] + ss[1]), r2 * (ss[0] - ss[1])]
        dual.append(zz)
        slacks.append(ss)
        k += blk.dim
    return SolveResult(status=status, x=x, dual=dual, objective=float(sol.obj_val),
                       primal_residual=float(sol.r_prim), dual_residual=float(sol.r_dual),
                       gap=float(abs(sol.obj_val - sol.obj_val_dual)),
                       iterations=int(sol.iterations), slacks=slacks)


register_backend("clarabel", _solve_clarabel)
register_backend("auto", _solve_auto)
