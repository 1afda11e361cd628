"""Multiuser multicarrier power control.

``K`` single-antenna links share ``N`` subcarriers. The rate of link ``k``
is ``R_k = sum_n log(1 + G_kkn p_kn / (sigma^2 + sum_{l != k} G_kln p_ln))``.
Four SCA formulations are provided:

==========  ===========================================================
wsr-socp    weighted sum rate, ``u log(u / u~) >= u t`` per carrier with the
            left side linearised and ``u t`` bounded by App1 or App2
wsr-gm      sum rate (equal weights), geometric mean of ``t <= u / u~``
            through a rotated-cone tower, App1 on ``t u~ <= u``
wsr-qp      weighted sum rate through a DC quadratic upper bound; the
            only variables are the powers and the objective epigraph
ee          max-min energy efficiency, App1 on ``theta (P_k + p_c) <= sum t``
==========  ===========================================================

All interference expressions are normalised by the direct gain, so
``u_kn = s_kn + p_kn + sum_{l != k} Gt_kln p_ln`` and ``u~_kn = u_kn - p_kn``
with ``s_kn = sigma^2 / G_kkn``. Powers are stored row-major, ``p[k * N + n]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ..bench.channels import dbm_to_watt, gen_multicarrier
from ..conic import ConeBlock, QuadraticForm, quad_epigraph
from ..sca import ConeConstraint, ScaProblem
from ..surrogates import App1, App2, Surrogate, _row, _slack_row

__all__ = [
    "MulticarrierInstance", "RhoSchedule", "RateSurrogate", "DcRateSurrogate",
    "FORMULATIONS", "PHI", "random_instance", "rates", "weighted_sum_rate",
    "energy_efficiency", "uniform_power", "random_power", "lemma1_rho", "rho_schedule",
    "rel_entropy_tangent", "gm_tower", "gm_tower_size", "fill_tower", "build_problem",
    "build_wsr_socp", "build_wsr_gm", "build_wsr_qp", "build_maxmin_ee", "powers",
    "ee_powers", "ee_power_unit", "log_ratio_hessian",
]

PHI = (1.0 + np.sqrt(5.0)) / 2.0
FORMULATIONS = ("wsr-socp", "wsr-gm", "wsr-qp", "ee")
LOCK_RATIO = 1e-8       # t / u below this anchors a rate bound at zero


@dataclass(frozen=True, eq=False)
class MulticarrierInstance:
    """Gains ``G[k, l, n]`` (transmitter ``l`` to receiver ``k``) and power data."""

    G: np.ndarray
    sigma2: float
    w: np.ndarray = None
    p_bar: np.ndarray = None
    p_mask: np.ndarray = None
    p_c: np.ndarray = None

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 3 or G.shape[0] != G.shape[1]:
            raise ValueError("gains must have shape (K, K, N)")
        K, _, N = G.shape
        diag = G[np.arange(K), np.arange(K)]
        if np.any(G < 0) or np.any(diag <= 0):
            raise ValueError("gains must be nonnegative with positive direct links")
        if self.sigma2 <= 0:
            raise ValueError("noise variance must be positive")
        w = np.ones(K) if self.w is None else np.broadcast_to(
            np.asarray(self.w, dtype=float), (K,)).copy()
        p_bar = np.ones(K) if self.p_bar is None else np.broadcast_to(
            np.asarray(self.p_bar, dtype=float), (K,)).copy()
        p_mask = np.repeat(p_bar[:, None], N, axis=1) if self.p_mask is None else \
            np.broadcast_to(np.asarray(self.p_mask, dtype=float), (K, N)).copy()
        p_c = np.zeros(K) if self.p_c is None else np.broadcast_to(
            np.asarray(self.p_c, dtype=float), (K,)).copy()
        if np.any(w < 0) or np.any(p_bar <= 0) or np.any(p_mask <= 0) or np.any(p_c < 0):
            raise ValueError("weights, budgets, masks and circuit powers must be valid")
        for name, val in (("G", G), ("w", w), ("p_bar", p_bar), ("p_mask", p_mask),
                          ("p_c", p_c)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def K(self) -> int:
        return self.G.shape[0]

    @property
    def N(self) -> int:
        return self.G.shape[2]

    @property
    def size(self) -> int:
        return self.K * self.N

    @cached_property
    def direct(self) -> np.ndarray:
        """``G_kkn`` as a (K, N) array."""
        return self.G[np.arange(self.K), np.arange(self.K)]

    @cached_property
    def noise(self) -> np.ndarray:
        """Normalised noise ``sigma^2 / G_kkn`` (K, N)."""
        return self.sigma2 / self.direct

    @cached_property
    def cross(self) -> np.ndarray:
        """Normalised cross gains ``G_kln / G_kkn`` with a zero diagonal (K, K, N)."""
        Gt = self.G / self.direct[:, None, :]
        Gt[np.arange(self.K), np.arange(self.K)] = 0.0
        return Gt

    @cached_property
    def interference_matrix(self) -> np.ndarray:
        """``C`` with ``(C p)[k N + n] = sum_{l != k} Gt_kln p_ln``."""
        K, N = self.K, self.N
        C = np.zeros((K, N, K, N))
        for n in range(N):
            C[:, n, :, n] = self.cross[:, :, n]
        return C.reshape(K * N, K * N)

    def t_range(self) -> tuple:
        """Bounds ``s_kn <= u~_kn <= s_kn + sum_{l != k} Gt_kln pmax_ln``."""
        pmax = np.minimum(self.p_mask, self.p_bar[:, None]).reshape(-1)
        hi = self.noise.reshape(-1) + self.interference_matrix @ pmax
        return self.noise.copy(), hi.reshape(self.K, self.N)

    def rescaled(self, unit: float) -> "MulticarrierInstance":
        """The same instance with powers measured in multiples of ``unit``.

        Rates are unchanged at ``p / unit``; energy efficiencies scale by ``unit``.
        """
        return MulticarrierInstance(self.G, self.sigma2 / unit, self.w, self.p_bar / unit,
                                    self.p_mask / unit, self.p_c / unit)

    def interference(self, p) -> np.ndarray:
        """``u~`` (normalised) as a (K, N) array."""
        p = np.asarray(p, dtype=float).reshape(-1)
        return (self.noise.reshape(-1) + self.interference_matrix @ p).reshape(self.K, self.N)


def random_instance(rng, K: int, N: int, p_bar_dbm: float = 32.0, sigma2_dbm: float = -30.0,
                    p_c_dbm: float = 5.0, weights=None, shadow_scale: str = "db",
                    shadow_std: float = 3.0) -> MulticarrierInstance:
    """Instance on the line geometry with six-tap multipath; powers in watts."""
    G = gen_multicarrier(np.random.default_rng(rng), K, N, shadow_std=shadow_std,
                         shadow_scale=shadow_scale)
    p_bar = float(dbm_to_watt(p_bar_dbm))
    return MulticarrierInstance(G=G, sigma2=float(dbm_to_watt(sigma2_dbm)),
                                w=np.ones(K) if weights is None else weights,
                                p_bar=p_bar, p_c=float(dbm_to_watt(p_c_dbm)))


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------
def powers(inst: MulticarrierInstance, v) -> np.ndarray:
    """The (K, N) power array at the front of a variable vector."""
    return np.asarray(v[:inst.size], dtype=float).reshape(inst.K, inst.N)


def rates(inst: MulticarrierInstance, p) -> np.ndarray:
    """Per-link rates in nats."""
    p = np.asarray(p, dtype=float).reshape(inst.K, inst.N)
    return np.sum(np.log1p(p / inst.interference(p)), axis=1)


def weighted_sum_rate(inst: MulticarrierInstance, p) -> float:
    return float(inst.w @ rates(inst, p))


def energy_efficiency(inst: MulticarrierInstance, p) -> np.ndarray:
    """``R_k / (sum_n p_kn + p_c_k)`` in nats per joule."""
    p = np.asarray(p, dtype=float).reshape(inst.K, inst.N)
    return rates(inst, p) / (p.sum(axis=1) + inst.p_c)


def uniform_power(inst: MulticarrierInstance) -> np.ndarray:
    """Budget spread evenly over the subcarriers, clipped to the masks."""
    return np.minimum(inst.p_bar[:, None] / inst.N, inst.p_mask)


def random_power(inst: MulticarrierInstance, rng) -> np.ndarray:
    """Random feasible allocation with every entry strictly positive."""
    rng = np.random.default_rng(rng)
    share = rng.dirichlet(np.ones(inst.N), size=inst.K) * rng.uniform(0.05, 1.0, (inst.K, 1))
    # independent clip per entry so that starts spread over the whole box
    clip = inst.p_mask * rng.uniform(0.05, 1.0, (inst.K, inst.N))
    return np.minimum(share * inst.p_bar[:, None], clip)


# ---------------------------------------------------------------------------
# shared building blocks
# ---------------------------------------------------------------------------
def _affine(width: int, coef, const: float, offset: int = 0) -> QuadraticForm:
    row = np.zeros(width)
    coef = np.asarray(coef, dtype=float)
    row[offset:offset + coef.size] = coef
    return QuadraticForm.affine(row, const)


def _link_forms(inst: MulticarrierInstance, width: int):
    """Affine forms ``u_kn`` and ``u~_kn`` in the leading power variables."""
    C = inst.interference_matrix
    s = inst.noise.reshape(-1)
    eye = np.eye(inst.size)
    u = [_affine(width, C[i] + eye[i], s[i]) for i in range(inst.size)]
    ut = [_affine(width, C[i], s[i]) for i in range(inst.size)]
    return u, ut


def _power_constraint(inst: MulticarrierInstance, width: int) -> ConeConstraint:
    """``0 <= p <= mask`` and ``sum_n p_kn <= p_bar_k`` as one nonneg block."""
    m = inst.size
    A = np.zeros((2 * m + inst.K, width))
    A[:m, :m] = np.eye(m)
    A[m:2 * m, :m] = -np.eye(m)
    A[2 * m:, :m] = -np.kron(np.eye(inst.K), np.ones(inst.N))
    off = np.concatenate([np.zeros(m), inst.p_mask.reshape(-1), inst.p_bar])
    return ConeConstraint((ConeBlock(A, off, "nonneg"),), name="power")


def _lower_bound(width: int, index, bound: float, name: str) -> ConeConstraint:
    index = np.atleast_1d(index)
    A = np.zeros((index.size, width))
    A[np.arange(index.size), index] = 1.0
    return ConeConstraint((ConeBlock(A, np.full(index.size, -bound), "nonneg"),), name=name)


def rel_entropy_tangent(u0: float, ut0: float) -> tuple:
    """Gradient ``(log(u0/ut0) + 1, -u0/ut0)`` of ``u log(u / ut)``.

    The function is positively homogeneous, so the tangent plane at
    ``(u0, ut0)`` passes through the origin and the gradient is all it takes.
    """
    if u0 <= 0 or ut0 <= 0:
        raise ValueError("relative entropy needs positive arguments")
    r = u0 / ut0
    return np.log(r) + 1.0, -r


@dataclass(frozen=True, eq=False)
class RateSurrogate(Surrogate):
    """``u t - u log(u / u~) <= 0`` with the entropy term linearised.

    The bilinear ``u t`` is bounded by App1 (AM-GM) or App2 (DC split) and the
    jointly convex ``u log(u / u~)`` by its tangent plane.
    """

    u: QuadraticForm = None
    ut: QuadraticForm = None
    t: QuadraticForm = None
    bilinear: str = "app1"
    kind = "rate"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if self.bilinear not in ("app1", "app2"):
            raise ValueError("bilinear bound must be 'app1' or 'app2'")
        for name in ("u", "ut", "t"):
            f = getattr(self, name)
            if f is None or not f.is_affine or f.n != self.n:
                raise ValueError(f"rate surrogate: {name} must be affine on {self.n} variables")

    @cached_property
    def tangent(self) -> QuadraticForm:
        a, b = rel_entropy_tangent(self.u(self.point), self.ut(self.point))
        return self.u * a + self.ut * b

    @cached_property
    def inner(self) -> Surrogate:
        """The bilinear bound of ``u t <= tangent`` anchored at the same point."""
        cls = App1 if self.bilinear == "app1" else App2
        return cls(point=self.point, h1=self.tangent, h2=self.t, l=self.u)

    def original(self, v):
        u, ut = self.u(v), self.ut(v)
        return u * self.t(v) - u * np.log(u / ut)

    @cached_property
    def locked(self) -> bool:
        """A link anchored at zero rate: the AM-GM ratio ``t / u`` vanishes and
        the bound degenerates to ``t <= 0`` with ``tangent >= 0``."""
        return self.bilinear == "app1" and self.t(self.point) <= LOCK_RATIO * self.u(self.point)

    def value(self, v):
        if self.locked:
            return self.u(v) * self.t(v) - self.tangent(v)
        return self.inner.value(v)

    def scale(self, v):
        u, ut = self.u(v), self.ut(v)
        return 1.0 + abs(u * self.t(v)) + abs(u * np.log(u / ut))

    def in_domain(self, v):
        return self.u(v) > 0 and self.ut(v) > 0 and self.t(v) >= 0

    def blocks(self, width=None, slack=None):
        if not self.locked:
            return self.inner.blocks(width, slack)
        width = width or self.n
        a, a0 = _row(self.tangent, width)
        t, t0 = _row(self.t, width)
        q = _slack_row(width, slack)
        return [ConeBlock(np.vstack([a + q, q - t]), [a0, -t0], "nonneg")]


# ---------------------------------------------------------------------------
# geometric-mean tower
# ---------------------------------------------------------------------------
def _tower_plan(leaves, root: int, first: int):
    """Pairs ``(a, b, parent)`` level by level with fresh node indices from ``first``.

    Leaves are padded to a power of two with the root itself. A pair made of
    two copies of the root is the root again and needs no cone.
    """
    leaves = list(leaves)
    if not leaves:
        raise ValueError("need at least one leaf")
    M = 2
    while M < len(leaves):
        M *= 2
    level = leaves + [root] * (M - len(leaves))
    plan = []
    nxt_index = first
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level), 2):
            a, b = level[i], level[i + 1]
            if a == root and b == root and len(level) > 2:
                nxt.append(root)
                continue
            if len(level) == 2:
                parent = root
            else:
                parent = nxt_index
                nxt_index += 1
            plan.append((a, b, parent))
            nxt.append(parent)
        level = nxt
    return plan, nxt_index - first


def gm_tower_size(m: int) -> int:
    """Number of internal node variables (the root excluded) for ``m`` leaves."""
    return _tower_plan(range(m), -1, 0)[1]


def gm_tower(width: int, leaves, first: int, root: int) -> list:
    """Rotated cones ``s^2 <= a b`` encoding ``root <= (prod leaves)^(1/m)``.

    Node variables occupy ``first, first + 1, ...``. With the padding the
    tower reads ``root^M <= root^(M - m) prod leaves``.
    """
    out = []
    for a, b, s in _tower_plan(leaves, root, first)[0]:
        rows = np.zeros((3, width))
        rows[0, a] += 1.0
        rows[1, b] += 1.0
        rows[2, s] = np.sqrt(2.0)
        out.append(ConeBlock(rows, np.zeros(3), "rsoc"))
    return out


def fill_tower(v, leaves, first: int, root: int):
    """Set the root to the geometric mean of the leaves and the nodes to the
    pairwise square roots beneath it (in place)."""
    vals = np.asarray(v[list(leaves)], dtype=float)
    v[root] = float(np.exp(np.mean(np.log(vals)))) if np.all(vals > 0) else 0.0
    for a, b, s in _tower_plan(leaves, root, first)[0]:
        if s != root:
            v[s] = np.sqrt(v[a] * v[b])
    return v


# ---------------------------------------------------------------------------
# Lipschitz-type curvature bound and the DC quadratic surrogate
# ---------------------------------------------------------------------------
def lemma1_rho(x0: float, y0: float) -> float:
    """``(x0 + y0)^-2`` for the corner ``x >= x0 >= 0, y >= y0 > 0``."""
    if y0 <= 0:
        raise ValueError("y0 must be positive")
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    return float((x0 + y0) ** -2)


def log_ratio_hessian(x, y) -> np.ndarray:
    """Hessian of ``log(1 + x / y)``."""
    a = 1.0 / (x + y) ** 2
    return np.array([[-a, -a], [-a, -a + 1.0 / y ** 2]])


@dataclass(frozen=True)
class RhoSchedule:
    """Per-carrier curvature weights.

    ``provable`` is ``shrink * lemma1_rho(0, s_kn)``: the split
    ``g = rho (p^2 + t^2) + log(1 + p/t)`` has Hessian
    ``2 rho I + H`` and ``H >= -(PHI / 2) * 2 / (x + y)^2``, so ``g`` is convex
    on the whole power box whenever ``shrink >= PHI / 2``. ``adaptive`` starts
    from the local value at the anchor and is raised by the safeguard
    whenever the quadratic fails to bound the rate at a new iterate.
    """

    rho: np.ndarray
    cap: np.ndarray
    mode: str = "provable"
    growth: float = 4.0


def rho_schedule(inst: MulticarrierInstance, mode: str = "provable", shrink: float = 1.0,
                 p=None) -> RhoSchedule:
    if shrink <= 0:
        raise ValueError("shrink factor must be positive")
    lo, _ = inst.t_range()
    cap = shrink * np.vectorize(lemma1_rho)(0.0, lo).reshape(-1)
    if mode == "provable":
        return RhoSchedule(cap.copy(), cap, mode)
    if mode != "adaptive":
        raise ValueError("rho mode must be 'provable' or 'adaptive'")
    p = uniform_power(inst) if p is None else np.asarray(p, dtype=float)
    t = inst.interference(p)
    local = (0.5 * PHI / (p + t) ** 2).reshape(-1)
    return RhoSchedule(np.minimum(local, cap), cap, mode)


@dataclass(frozen=True, eq=False)
class DcRateSurrogate(Surrogate):
    """``-sum w log(1 + p / t(p)) <= tau`` through ``h - lin[g]`` with
    ``h = sum w rho (p^2 + t^2)``, ``t(p) = s + C p`` substituted."""

    inst: MulticarrierInstance = None
    tau: int = None
    schedule: RhoSchedule = None
    kind = "dc-rate"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if self.schedule is None:
            object.__setattr__(self, "schedule", rho_schedule(self.inst, "provable"))

    @cached_property
    def _weights(self) -> np.ndarray:
        return np.repeat(self.inst.w, self.inst.N)

    def _pt(self, v):
        m = self.inst.size
        p = np.asarray(v[:m], dtype=float)
        t = self.inst.noise.reshape(-1) + self.inst.interference_matrix @ p
        return p, t

    def terms(self, v) -> np.ndarray:
        """Per-carrier ``-w log(1 + p / t)``."""
        p, t = self._pt(v)
        return -self._weights * np.log1p(p / t)

    def original(self, v):
        return float(self.terms(v).sum()) - v[self.tau]

    @cached_property
    def h(self) -> QuadraticForm:
        m = self.inst.size
        r = np.sqrt(self._weights * self.schedule.rho)
        F = np.zeros((2 * m, self.n))
        F[:m, :m] = np.diag(r)
        F[m:, :m] = r[:, None] * self.inst.interference_matrix
        d = np.concatenate([np.zeros(m), r * self.inst.noise.reshape(-1)])
        return QuadraticForm.from_residual(F, d)

    def _g_terms(self, v) -> np.ndarray:
        p, t = self._pt(v)
        wr = self._weights * self.schedule.rho
        return wr * (p ** 2 + t ** 2) + self._weights * np.log1p(p / t)

    @cached_property
    def g_lin(self) -> QuadraticForm:
        """Tangent plane of ``g`` at the anchor, in the full variable vector."""
        y = self.point
        p, t = self._pt(y)
        w, rho = self._weights, self.schedule.rho
        dp = w * (2.0 * rho * p + 1.0 / (t + p))
        dt = w * (2.0 * rho * t - p / (t * (t + p)))
        grad = np.zeros(self.n)
        grad[:p.size] = dp + self.inst.interference_matrix.T @ dt
        return QuadraticForm.affine(grad, float(self._g_terms(y).sum()) - grad @ y)

    def value(self, v):
        return self.h(v) - self.g_lin(v) - v[self.tau]

    def term_gaps(self, v) -> np.ndarray:
        """Per-carrier ``F_kn - f_kn``, including each carrier's share of the tangent."""
        y = self.point
        p, t = self._pt(v)
        py, ty = self._pt(y)
        w, rho = self._weights, self.schedule.rho
        dp = w * (2.0 * rho * py + 1.0 / (ty + py))
        dt = w * (2.0 * rho * ty - py / (ty * (ty + py)))
        g_y = w * rho * (py ** 2 + ty ** 2) + w * np.log1p(py / ty)
        lin = g_y + dp * (p - py) + dt * (t - ty)
        F = w * rho * (p ** 2 + t ** 2) - lin
        return F - self.terms(v)

    def scale(self, v):
        return 1.0 + abs(float(self.terms(v).sum())) + abs(v[self.tau])

    def reanchor(self, v):
        v = np.asarray(v, dtype=float).copy()
        sched = self.schedule
        if sched.mode == "adaptive":
            p, t = self._pt(v)
            local = 0.5 * PHI / (p + t) ** 2
            sched = replace(sched, rho=np.minimum(local, sched.cap))
        return replace(self, point=v, schedule=sched)

    def safeguard(self, v):
        """Stiffen ``rho`` on carriers where the quadratic undercuts the rate."""
        if self.schedule.mode != "adaptive":
            return None
        bad = self.term_gaps(v) < -1e-12 * (1.0 + np.abs(self.terms(v)))
        bad &= self.schedule.rho < self.schedule.cap
        if not np.any(bad):
            return None
        rho = self.schedule.rho.copy()
        rho[bad] = np.minimum(rho[bad] * self.schedule.growth, self.schedule.cap[bad])
        return replace(self, schedule=replace(self.schedule, rho=rho))

    def blocks(self, width=None, slack=None):
        width = width or self.n
        bound = (self.g_lin + QuadraticForm.variable(self.n, self.tau)).pad(width)
        if slack is not None:
            bound = bound + QuadraticForm.variable(width, slack)
        return quad_epigraph(self.h.pad(width), bound)


# ---------------------------------------------------------------------------
# formulations
# ---------------------------------------------------------------------------
def _start(inst, p0):
    p0 = uniform_power(inst) if p0 is None else np.asarray(p0, dtype=float)
    return p0.reshape(-1)


def build_wsr_socp(inst: MulticarrierInstance, p0=None, bilinear: str = "app1"):
    """Weighted sum rate with ``t_kn`` per carrier. Layout ``[p; t]``."""
    m = inst.size
    n = 2 * m
    it = m + np.arange(m)
    u, ut = _link_forms(inst, n)
    w = np.repeat(inst.w, inst.N)

    def tighten(v):
        v[:m] = np.maximum(v[:m], 0.0)
        v[it] = np.log(np.array([a(v) / b(v) for a, b in zip(u, ut)]))
        return v

    v0 = tighten(np.concatenate([_start(inst, p0), np.zeros(m)]))
    surrogates = [RateSurrogate(point=v0, u=u[i], ut=ut[i],
                                t=QuadraticForm.variable(n, int(it[i])), bilinear=bilinear)
                  for i in range(m)]
    constraints = [_power_constraint(inst, n), _lower_bound(n, it, 0.0, "t >= 0")]
    objective = _affine(n, -w, 0.0, offset=m)
    problem = ScaProblem(n=n, objective=objective, constraints=constraints,
                         surrogates=surrogates, tighten=tighten,
                         metric=lambda v: weighted_sum_rate(inst, v[:m]), name="mc-wsr-socp")
    return problem, v0


def build_wsr_gm(inst: MulticarrierInstance, p0=None):
    """Sum rate through the geometric mean of ``t_kn <= u / u~``.

    Layout ``[p; t; tower nodes; tau]``; the objective is ``-tau``.
    """
    if not np.allclose(inst.w, inst.w[0]):
        raise ValueError("the geometric-mean formulation needs equal weights")
    m = inst.size
    internal = gm_tower_size(m)
    n = 2 * m + internal + 1
    it = m + np.arange(m)
    first = 2 * m
    tau = n - 1
    u, ut = _link_forms(inst, n)

    def tighten(v):
        v[:m] = np.maximum(v[:m], 0.0)
        v[it] = np.array([a(v) / b(v) for a, b in zip(u, ut)])
        return fill_tower(v, it, first, tau)

    v0 = tighten(np.concatenate([_start(inst, p0), np.zeros(m + internal + 1)]))
    surrogates = [App1(point=v0, h1=u[i], h2=ut[i], l=int(it[i])) for i in range(m)]
    constraints = [_power_constraint(inst, n), _lower_bound(n, it, 1.0, "t >= 1"),
                   ConeConstraint(tuple(gm_tower(n, it, first, tau)), name="geometric mean")]
    problem = ScaProblem(n=n, objective=QuadraticForm.variable(n, tau, -1.0),
                         constraints=constraints, surrogates=surrogates, tighten=tighten,
                         metric=lambda v: weighted_sum_rate(inst, v[:m]), name="mc-wsr-gm")
    return problem, v0


def build_wsr_qp(inst: MulticarrierInstance, p0=None, rho: str = "provable",
                 shrink: float = 1.0):
    """Weighted sum rate through the DC quadratic bound. Layout ``[p; tau]``.

    Parameters
    ----------
    rho : {"provable", "adaptive"}
        Curvature schedule, see :class:`RhoSchedule`.
    shrink : float
        Multiplier on the corner bound.
    """
    m = inst.size
    n = m + 1
    tau = m
    p_init = _start(inst, p0)
    sched = rho_schedule(inst, rho, shrink, p_init.reshape(inst.K, inst.N))
    w = np.repeat(inst.w, inst.N)

    def tighten(v):
        p = v[:m] = np.maximum(v[:m], 0.0)
        t = inst.noise.reshape(-1) + inst.interference_matrix @ p
        v[tau] = -float(w @ np.log1p(p / t))
        return v

    v0 = tighten(np.concatenate([p_init, [0.0]]))
    surrogate = DcRateSurrogate(point=v0, inst=inst, tau=tau, schedule=sched)
    problem = ScaProblem(n=n, objective=QuadraticForm.variable(n, tau),
                         constraints=[_power_constraint(inst, n)], surrogates=[surrogate],
                         tighten=tighten, metric=lambda v: weighted_sum_rate(inst, v[:m]),
                         name="mc-wsr-qp")
    return problem, v0


def build_maxmin_ee(inst: MulticarrierInstance, p0=None, bilinear: str = "app1",
                    power_unit: float | None = None):
    """Max-min energy efficiency. Layout ``[p / unit; t; unit * theta]``;
    objective ``-theta``.

    Powers are measured in ``power_unit`` (default: the mean circuit power),
    which keeps the efficiency-optimal powers near one and the subproblems
    well scaled. Use :func:`ee_powers` to read powers back in watts.
    """
    if np.any(inst.p_c <= 0):
        raise ValueError("circuit powers must be positive")
    unit = ee_power_unit(inst) if power_unit is None else float(power_unit)
    sc = inst.rescaled(unit)
    K, N, m = inst.K, inst.N, inst.size
    n = 2 * m + 1
    it = m + np.arange(m)
    ith = n - 1
    u, ut = _link_forms(sc, n)

    def tighten(v):
        v[:m] = np.maximum(v[:m], 0.0)
        v[it] = np.log(np.array([a(v) / b(v) for a, b in zip(u, ut)]))
        v[ith] = float(np.min(v[it].reshape(K, N).sum(axis=1)
                              / (v[:m].reshape(K, N).sum(axis=1) + sc.p_c)))
        return v

    start = _start(inst, p0) / unit
    v0 = tighten(np.concatenate([start, np.zeros(m + 1)]))
    surrogates = []
    for k in range(K):
        block = np.arange(k * N, (k + 1) * N)
        spent = _affine(n, np.isin(np.arange(m), block).astype(float), sc.p_c[k])
        rate = _affine(n, np.isin(np.arange(m), block).astype(float), 0.0, offset=m)
        surrogates.append(App1(point=v0, h1=rate, h2=spent, l=ith))
    surrogates += [RateSurrogate(point=v0, u=u[i], ut=ut[i],
                                 t=QuadraticForm.variable(n, int(it[i])), bilinear=bilinear)
                   for i in range(m)]
    constraints = [_power_constraint(sc, n), _lower_bound(n, it, 0.0, "t >= 0"),
                   _lower_bound(n, ith, 0.0, "theta >= 0")]
    problem = ScaProblem(n=n, objective=QuadraticForm.variable(n, ith, -1.0 / unit),
                         constraints=constraints, surrogates=surrogates, tighten=tighten,
                         metric=lambda v: float(np.min(energy_efficiency(inst, unit * v[:m]))),
                         name="mc-ee")
    return problem, v0


def ee_power_unit(inst: MulticarrierInstance) -> float:
    """Default power unit of :func:`build_maxmin_ee`."""
    return float(np.mean(inst.p_c))


def ee_powers(inst: MulticarrierInstance, v, power_unit: float | None = None) -> np.ndarray:
    """Powers in watts from a :func:`build_maxmin_ee` variable vector."""
    unit = ee_power_unit(inst) if power_unit is None else float(power_unit)
    return unit * powers(inst, v)


def build_problem(inst: MulticarrierInstance, formulation: str = "wsr-socp", p0=None,
                  **kw):
    """Dispatch on the formulation name."""
    builders = {"wsr-socp": build_wsr_socp, "wsr-gm": build_wsr_gm,
                "wsr-qp": build_wsr_qp, "ee": build_maxmin_ee}
    try:
        return builders[formulation](inst, p0, **kw)
    except KeyError:
        raise ValueError(f"unknown formulation {formulation!r}; "
                         f"choose from {', '.join(FORMULATIONS)}") from None
