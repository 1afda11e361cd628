"""Dense primal-dual interior-point method for LP/SOC programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step. The problem is brought to

    minimize c^T x  s.t.  A x = b,  G x + s = h,  s in K

with K a product of a nonnegative orthant and second-order cones. Rotated
cones are mapped to standard ones by an orthogonal change of coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .program import ConicProgram, SolveResult, SolverSettings, Status

__all__ = ["solve_ipm"]

_R2 = np.sqrt(0.5)


# ---------------------------------------------------------------------------
# standard form
# ---------------------------------------------------------------------------
@dataclass
class _Standard:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    n_lp: int
    soc: list          # list of (start, dim) into the inequality rows
    layout: list       # per original block: (kind, slice, rsoc balance or 0)
    row_scale: np.ndarray   # positive factors applied to the inequality rows
    c_scale: float          # objective was divided by this
    col_scale: np.ndarray   # x = col_scale * x_scaled
    eq_scale: np.ndarray    # factors applied to the equality rows


def _rotate(M: np.ndarray) -> np.ndarray:
    """Apply the symmetric orthogonal map taking rsoc coordinates to soc."""
    M = M.copy()
    a, b = M[0].copy(), M[1].copy()
    M[0] = _R2 * (a + b)
    M[1] = _R2 * (a - b)
    return M


def _ruiz(A, G, n_lp: int, soc_dims: list, iters: int = 10, lo: float = 1e-4,
          hi: float = 1e4):
    """Ruiz equilibration of ``[A; G]``: column factors, equality row factors
    and inequality row factors that are constant over each cone block."""
    n = G.shape[1] if G.size or not A.size else A.shape[1]
    D = np.ones(n)
    Ea = np.ones(A.shape[0])
    Eg = np.ones(G.shape[0])
    soc_starts = n_lp + np.cumsum([0] + soc_dims[:-1]) if soc_dims else []
    starts = np.concatenate([np.arange(n_lp), soc_starts]).astype(int)
    sizes = np.diff(np.append(starts, G.shape[0]))

    def inv_sqrt(v):
        v = np.where(v > 0, v, 1.0)
        return 1.0 / np.sqrt(v)

    for _ in range(iters):
        As = np.abs(A) * Ea[:, None] * D
        Gs = np.abs(G) * Eg[:, None] * D
        col = np.maximum(np.max(As, axis=0, initial=0.0), np.max(Gs, axis=0, initial=0.0))
        D = np.clip(D * inv_sqrt(col), lo, hi)
        As = np.abs(A) * Ea[:, None] * D
        Gs = np.abs(G) * Eg[:, None] * D
        Ea = np.clip(Ea * inv_sqrt(np.max(As, axis=1, initial=0.0)), lo, hi)
        if G.shape[0]:
            grp = np.maximum.reduceat(np.max(Gs, axis=1, initial=0.0), starts)
            Eg = np.clip(Eg * np.repeat(inv_sqrt(grp), sizes), lo, hi)
    return D, Ea, Eg


def _standard_form(prog: ConicProgram) -> _Standard:
    n = prog.n
    eq_rows, eq_off = [], []
    lp_rows, lp_off = [], []
    soc_rows, soc_off = [], []
    where = []
    n_eq = n_lp = n_soc = 0
    for blk in prog.blocks:
        if blk.cone == "zero":
            eq_rows.append(blk.rows)
            eq_off.append(blk.offset)
            where.append(("eq", n_eq, blk.dim, False))
            n_eq += blk.dim
        elif blk.cone == "nonneg":
            lp_rows.append(blk.rows)
            lp_off.append(blk.offset)
            where.append(("lp", n_lp, blk.dim, False))
            n_lp += blk.dim
        else:
            rot = blk.cone == "rsoc"
            R = np.column_stack([blk.rows, blk.offset])
            k = 1.0
            if rot:
                # 2ab >= |c|^2 is invariant under (a, b) -> (a / k, k b)
                m0, m1 = np.max(np.abs(R[0])), np.max(np.abs(R[1]))
                if m0 > 0 and m1 > 0:
                    k = np.sqrt(m0 / m1)
                    R[0] /= k
                    R[1] *= k
                R = _rotate(R)
            soc_rows.append(R[:, :-1])
            soc_off.append(R[:, -1])
            where.append(("soc", n_soc, blk.dim, k if rot else 0.0))
            n_soc += blk.dim
    A = np.vstack(eq_rows) if eq_rows else np.zeros((0, n))
    b = -np.concatenate(eq_off) if eq_off else np.zeros(0)
    G = -np.vstack(lp_rows + soc_rows) if (lp_rows or soc_rows) else np.zeros((0, n))
    h = np.concatenate(lp_off + soc_off) if (lp_off or soc_off) else np.zeros(0)
    c = np.asarray(prog.objective, dtype=float)
    soc_dims = [dim for kind, _, dim, _ in where if kind == "soc"]
    col_scale, eq_scale, row_scale = _ruiz(A, G, n_lp, soc_dims)
    A = eq_scale[:, None] * A * col_scale
    b = b * eq_scale
    G = row_scale[:, None] * G * col_scale
    h = h * row_scale
    c = c * col_scale
    c_scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    soc = []
    layout = []
    for kind, start, dim, rot in where:
        if kind == "soc":
            soc.append((n_lp + start, dim))
            layout.append(("soc", slice(n_lp + start, n_lp + start + dim), rot))
        else:
            layout.append((kind, slice(start, start + dim), 0.0))
    return _Standard(c / c_scale, A, b, G, h, n_lp, soc, layout, row_scale, c_scale,
                     col_scale, eq_scale)


# ---------------------------------------------------------------------------
# cone arithmetic
# ---------------------------------------------------------------------------
class _Cone:
    """Product of a nonnegative orthant and second-order cones.

    Second-order blocks are handled together through segment indices so that
    no Python loop runs over the blocks.
    """

    def __init__(self, n_lp: int, soc: list):
        self.n_lp = n_lp
        self.soc = soc
        self.m = n_lp + sum(d for _, d in soc)
        self.degree = n_lp + len(soc)
        nb = len(soc)
        self.nb = nb
        self.heads = np.array([st for st, _ in soc], dtype=int)
        dims = np.array([d for _, d in soc], dtype=int)
        self.tails = np.concatenate([np.arange(st + 1, st + d) for st, d in soc]) \
            if nb else np.zeros(0, dtype=int)
        self.tseg = np.repeat(np.arange(nb), dims - 1)
        # all (row, col) pairs inside the blocks, with local positions
        r, c, b = [], [], []
        for j, (st, d) in enumerate(soc):
            rr, cc = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
            r.append(st + rr.ravel())
            c.append(st + cc.ravel())
            b.append(np.full(d * d, j))
        self.pr = np.concatenate(r) if nb else np.zeros(0, dtype=int)
        self.pc = np.concatenate(c) if nb else np.zeros(0, dtype=int)
        self.pb = np.concatenate(b) if nb else np.zeros(0, dtype=int)
        if nb:
            self.pr_head = self.pr == self.heads[self.pb]
            self.pc_head = self.pc == self.heads[self.pb]
        self.e = np.zeros(self.m)
        self.e[:n_lp] = 1.0
        self.e[self.heads] = 1.0

    def tail_dot(self, u, v):
        return np.bincount(self.tseg, weights=u[self.tails] * v[self.tails], minlength=self.nb)

    def det(self, u):
        """``u0^2 - ||u1||^2`` per block, computed as a product for accuracy."""
        nrm = np.sqrt(self.tail_dot(u, u))
        u0 = u[self.heads]
        return (u0 - nrm) * (u0 + nrm)

    def jprod(self, u, v):
        out = np.empty(self.m)
        k = self.n_lp
        out[:k] = u[:k] * v[:k]
        if self.nb:
            h, t, seg = self.heads, self.tails, self.tseg
            out[h] = u[h] * v[h] + self.tail_dot(u, v)
            out[t] = u[h][seg] * v[t] + v[h][seg] * u[t]
        return out

    def jdiv(self, lam, d):
        """Solve ``lam o x = d`` for ``x``."""
        out = np.empty(self.m)
        k = self.n_lp
        out[:k] = d[:k] / lam[:k]
        if self.nb:
            h, t, seg = self.heads, self.tails, self.tseg
            l0 = lam[h]
            x0 = (l0 * d[h] - self.tail_dot(lam, d)) / self.det(lam)
            out[h] = x0
            out[t] = (d[t] - x0[seg] * lam[t]) / l0[seg]
        return out

    def max_step(self, u, du):
        """Largest ``a`` with ``u + a du`` in the cone (``u`` interior)."""
        amax = np.inf
        k = self.n_lp
        if k:
            neg = du[:k] < 0
            if np.any(neg):
                amax = min(amax, float(np.min(-u[:k][neg] / du[:k][neg])))
        if self.nb:
            amax = min(amax, _soc_steps(self, u, du))
        return amax

    def shift_into(self, v):
        """Smallest ``a`` so that ``v + a e`` lies in the cone."""
        a = -np.inf
        k = self.n_lp
        if k:
            a = max(a, float(np.max(-v[:k])))
        if self.nb:
            a = max(a, float(np.max(np.sqrt(self.tail_dot(v, v)) - v[self.heads])))
        return a


def _soc_steps(cone: _Cone, u, d) -> float:
    """Smallest positive root of ``det(u + a d) = 0`` over all blocks."""
    h = cone.heads
    # det(u + a d) = qa a^2 + 2 qb a + qc
    qa = d[h] ** 2 - cone.tail_dot(d, d)
    qb = u[h] * d[h] - cone.tail_dot(u, d)
    qc = cone.det(u)
    scale = np.maximum(np.maximum(np.abs(qa), np.abs(qb)), np.maximum(np.abs(qc), 1e-300))
    qa, qb, qc = qa / scale, qb / scale, qc / scale
    disc = qb * qb - qa * qc
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = -(qb + np.copysign(sq, qb))
    t = np.where(qb == 0, -sq, t)
    with np.errstate(all="ignore"):
        r1 = np.where(t != 0, qc / t, np.inf)
        r2 = np.where(qa != 0, t / qa, np.inf)
    r1 = np.where(ok & (r1 > 0), r1, np.inf)
    r2 = np.where(ok & (r2 > 0), r2, np.inf)
    return float(min(np.min(r1), np.min(r2)))


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam``.

    On a second-order block ``W = eta * H(w)`` where ``H(w)`` is the
    hyperbolic Householder matrix ``[[w0, w1^T], [w1, I + w1 w1^T / (1 + w0)]]``
    and ``H(w)^{-1} = J H(w) J``. The block-diagonal matrices are kept dense.
    """

    def __init__(self, cone: _Cone, s=None, z=None):
        self.cone = cone
        m, k = cone.m, cone.n_lp
        if s is None:
            self.W = self.Winv = self.W2 = self.Winv2 = np.eye(m)
            self.lam = None
            return
        W = np.zeros((m, m))
        Wi = np.zeros((m, m))
        d = np.sqrt(s[:k] / z[:k])
        W[np.arange(k), np.arange(k)] = d
        Wi[np.arange(k), np.arange(k)] = 1.0 / d
        if cone.nb:
            h, seg = cone.heads, cone.tseg
            sn = np.sqrt(np.maximum(cone.det(s), 1e-300))
            zn = np.sqrt(np.maximum(cone.det(z), 1e-300))
            snf = np.ones(m)
            znf = np.ones(m)
            snf[h], snf[cone.tails] = sn, sn[seg]
            znf[h], znf[cone.tails] = zn, zn[seg]
            sb, zb = s / snf, z / znf      # only the cone rows are used
            gamma = np.sqrt(np.maximum((1.0 + sb[h] * zb[h] + cone.tail_dot(sb, zb)) / 2.0, 1e-300))
            wb = np.empty(m)
            wb[h] = (sb[h] + zb[h]) / (2.0 * gamma)
            wb[cone.tails] = (sb[cone.tails] - zb[cone.tails]) / (2.0 * gamma[seg])
            eta = np.sqrt(sn / zn)
            pr, pc, pb = cone.pr, cone.pc, cone.pb
            rh, ch = cone.pr_head, cone.pc_head
            w0 = wb[h][pb]
            val = np.where(rh & ch, w0,
                           np.where(rh, wb[pc],
                                    np.where(ch, wb[pr],
                                             (pr == pc) + wb[pr] * wb[pc] / (1.0 + w0))))
            sign = np.where(rh ^ ch, -1.0, 1.0)
            W[pr, pc] = eta[pb] * val
            Wi[pr, pc] = sign * val / eta[pb]
        self.W, self.Winv = W, Wi
        self.W2 = W @ W
        self.Winv2 = Wi @ Wi
        self.lam = W @ z

    def apply(self, V, inverse=False, power=1):
        """``W^power V`` (or inverse) for a vector or a row-stacked matrix."""
        if power == 1:
            return (self.Winv if inverse else self.W) @ V
        if power == 2:
            return (self.Winv2 if inverse else self.W2) @ V
        raise ValueError("power must be 1 or 2")


# ---------------------------------------------------------------------------
# KKT system
# ---------------------------------------------------------------------------
class _KKT:
    """Solve ``[[0, A^T, G^T], [A, 0, 0], [G, 0, -W^2]] [x; y; z] = r``.

    Factorises the equivalent augmented system in ``zt = W z``,
    ``[[0, A^T, M^T], [A, 0, 0], [M, 0, -I]]`` with ``M = W^-1 G``, which keeps
    the conditioning of ``W`` instead of squaring it. A tiny static
    regularisation is removed again by iterative refinement.
    """

    def __init__(self, A, G, W: _Scaling, refine: int = 3):
        self.A, self.G, self.W = A, G, W
        n, p, m = G.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.refine = refine
        M = W.apply(G, inverse=True)
        reg = 1e-11
        H = np.zeros((n + p + m, n + p + m))
        H[:n, :n] = reg * np.eye(n)
        H[:n, n:n + p] = A.T
        H[:n, n + p:] = M.T
        H[n:n + p, :n] = A
        H[n:n + p, n:n + p] = -reg * np.eye(p)
        H[n + p:, :n] = M
        H[n + p:, n + p:] = -np.eye(m)
        self.lu = sla.lu_factor(H, check_finite=True)

    def _solve_once(self, r1, r2, r3):
        W = self.W
        rhs = np.concatenate([r1, r2, W.apply(r3, inverse=True)])
        sol = sla.lu_solve(self.lu, rhs)
        n, p = self.n, self.p
        return sol[:n], sol[n:n + p], W.apply(sol[n + p:], inverse=True)

    def solve(self, r1, r2, r3):
        x, y, z = self._solve_once(r1, r2, r3)
        scale = 1.0 + max(np.max(np.abs(r1), initial=0), np.max(np.abs(r2), initial=0),
                          np.max(np.abs(r3), initial=0))
        for _ in range(self.refine):
            e1 = r1 - self.A.T @ y - self.G.T @ z
            e2 = r2 - self.A @ x
            e3 = r3 - (self.G @ x - self.W.apply(z, power=2))
            err = max(np.max(np.abs(e1), initial=0), np.max(np.abs(e2), initial=0),
                      np.max(np.abs(e3), initial=0))
            if err <= 1e-14 * scale:
                break
            dx, dy, dz = self._solve_once(e1, e2, e3)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
def solve_ipm(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Solve ``prog`` with the reference interior-point method."""
    settings = settings or SolverSettings()
    std = _standard_form(prog)
    c, A, b, G, h = std.c, std.A, std.b, std.G, std.h
    cone = _Cone(std.n_lp, std.soc)
    n, p, m = c.size, b.size, h.size
    nb, nh, nc = np.linalg.norm(b), np.linalg.norm(h), np.linalg.norm(c)

    def finish(status, x, y, z, s, tau, it, pres, dres, gap):
        return _package(prog, std, status, x, y, z, s, tau, it, pres, dres, gap)

    # initial point: least-squares primal and dual with identity scaling
    try:
        kkt0 = _KKT(A, G, _Scaling(cone))
        x, _, zz = kkt0.solve(np.zeros(n), b, h)
        s = -zz
        _, y, z = kkt0.solve(-c, np.zeros(p), np.zeros(m))
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return finish(Status.NUMERICAL_ERROR, np.zeros(n), np.zeros(p), np.zeros(m),
                      np.zeros(m), 1.0, 0, np.inf, np.inf, np.inf)
    if m:
        a = cone.shift_into(s)
        if a >= 0:
            s = s + (1.0 + a) * cone.e
        a = cone.shift_into(z)
        if a >= 0:
            z = z + (1.0 + a) * cone.e
    tau, kappa = 1.0, 1.0

    best = None
    pres = dres = gap = np.inf
    for it in range(settings.max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = -A @ x + b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        pcost = c @ x / tau
        dcost = -(b @ y + h @ z) / tau
        sz = s @ z
        pres = max(np.linalg.norm(ry) / (1.0 + nb), np.linalg.norm(rz) / (1.0 + nh)) / tau
        dres = np.linalg.norm(rx) / (1.0 + nc) / tau
        gap = sz / tau ** 2
        relgap = gap / max(min(abs(pcost), abs(dcost)), 1e-300)
        if settings.verbose:
            print(f"{it:3d} pcost={pcost:+.6e} dcost={dcost:+.6e} pres={pres:.1e} "
                  f"dres={dres:.1e} gap={gap:.1e} tau={tau:.1e} kappa={kappa:.1e}")
        if not np.all(np.isfinite([pres, dres, gap, tau, kappa])):
            break
        merit = max(pres, dres, min(abs(gap), abs(relgap)))
        if best is None or merit < best[0]:
            best = (merit, x.copy(), y.copy(), z.copy(), s.copy(), tau, pres, dres, gap)
        if (pres <= settings.tol_feas and dres <= settings.tol_feas
                and (gap <= settings.tol_gap_abs or relgap <= settings.tol_gap_rel)):
            return finish(Status.OPTIMAL, x, y, z, s, tau, it, pres, dres, gap)
        by_hz = b @ y + h @ z
        if by_hz < 0:
            pinf = np.linalg.norm(A.T @ y + G.T @ z) / -by_hz
            if pinf <= settings.tol_feas and kappa > tau * 1e-3:
                scale = -1.0 / by_hz
                return finish(Status.PRIMAL_INFEASIBLE, x * 0, y * scale, z * scale, s * 0,
                              1.0, it, pres, dres, gap)
        cx = c @ x
        if cx < 0:
            dinf = max(np.linalg.norm(A @ x), np.linalg.norm(G @ x + s)) / -cx
            if dinf <= settings.tol_feas and kappa > tau * 1e-3:
                scale = -1.0 / cx
                return finish(Status.DUAL_INFEASIBLE, x * scale, y * 0, z * 0, s * scale,
                              1.0, it, pres, dres, gap)
        if it == settings.max_iter:
            break

        try:
            with np.errstate(all="raise"):
                W = _Scaling(cone, s, z)
                lam = W.lam
                kkt = _KKT(A, G, W)
                x1, y1, z1 = kkt.solve(-c, b, h)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            break
        mu = (sz + tau * kappa) / (cone.degree + 1)

        def direction(dx_, dy_, dz_, dt_, ds_, dk_):
            u = cone.jdiv(lam, ds_) if m else np.zeros(0)
            x2, y2, z2 = kkt.solve(dx_, -dy_, dz_ - W.apply(u))
            den = c @ x1 + b @ y1 + h @ z1 - kappa / tau
            dtau = (dt_ - dk_ / tau - (c @ x2 + b @ y2 + h @ z2)) / den
            ddx = x2 + dtau * x1
            ddy = y2 + dtau * y1
            ddz = z2 + dtau * z1
            dds = W.apply(u - W.apply(ddz)) if m else np.zeros(0)
            dkap = (dk_ - kappa * dtau) / tau
            return ddx, ddy, ddz, dds, dtau, dkap

        def step_len(dz_, ds_, dtau, dkap):
            a = np.inf
            if m:
                a = min(a, cone.max_step(lam, W.apply(ds_, inverse=True)),
                        cone.max_step(lam, W.apply(dz_)))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        with np.errstate(all="raise"):
            try:
                # predictor
                aff = direction(-rx, -ry, -rz, -rt,
                                -cone.jprod(lam, lam) if m else np.zeros(0), -tau * kappa)
                a_aff = min(1.0, step_len(aff[2], aff[3], aff[4], aff[5]))
                sigma = (1.0 - a_aff) ** 3
                # corrector
                ds_c = -cone.jprod(lam, lam) + sigma * mu * cone.e if m else np.zeros(0)
                if m:
                    ds_c -= cone.jprod(W.apply(aff[3], inverse=True), W.apply(aff[2]))
                dk_c = -tau * kappa + sigma * mu - aff[4] * aff[5]
                f = 1.0 - sigma
                dx, dy, dz, ds, dtau, dkap = direction(-f * rx, -f * ry, -f * rz, -f * rt,
                                                       ds_c, dk_c)
                alpha = min(1.0, 0.99 * step_len(dz, ds, dtau, dkap))
            except (FloatingPointError, np.linalg.LinAlgError, ValueError):
                break
        if settings.verbose:
            print(f"    a_aff={a_aff:.2e} sigma={sigma:.2e} alpha={alpha:.2e}")
        if not np.isfinite(alpha) or alpha < 1e-12:
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    status = Status.MAX_ITERATIONS if it == settings.max_iter else Status.NUMERICAL_ERROR
    if best is None:
        return finish(status, x, y, z, s, tau, it, pres, dres, gap)
    _, x, y, z, s, tau, pres, dres, gap = best
    return finish(status, x, y, z, s, tau, it, pres, dres, gap)


def _package(prog, std, status, x, y, z, s, tau, it, pres, dres, gap):
    x, y, z, s = x / tau, y / tau, z / tau, s / tau
    # undo the equilibration: s was multiplied by row_scale, duals divided
    x = x * std.col_scale
    y = y * std.eq_scale * std.c_scale
    z = z * std.row_scale * std.c_scale
    s = s / std.row_scale
    dual, slacks = [], []
    for (kind, sl, rot), blk in zip(std.layout, prog.blocks):
        if kind == "eq":
            dual.append(-y[sl])
            slacks.append(np.zeros(blk.dim))
        else:
            zz, ss = z[sl].copy(), s[sl].copy()
            if rot:
                zz, ss = _rotate(zz[:, None])[:, 0], _rotate(ss[:, None])[:, 0]
                zz[0], zz[1] = zz[0] / rot, zz[1] * rot
                ss[0], ss[1] = ss[0] * rot, ss[1] / rot
            dual.append(zz)
            slacks.append(ss)
    obj = float(prog.objective @ x) if status != Status.PRIMAL_INFEASIBLE else np.inf
    return SolveResult(status=status, x=x, dual=dual, objective=obj,
                       primal_residual=float(pres), dual_residual=float(dres),
                       gap=float(gap), iterations=it, slacks=slacks)
