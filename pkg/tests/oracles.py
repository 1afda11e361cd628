"""Reference computations written independently of the package internals."""

from __future__ import annotations

import numpy as np

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def two_link_rates(G, sigma2, p1, p2):
    """Rates of two single-carrier links straight from the raw gains ``G[k, l]``."""
    r1 = np.log1p(G[0, 0] * p1 / (sigma2 + G[0, 1] * p2))
    r2 = np.log1p(G[1, 1] * p2 / (sigma2 + G[1, 0] * p1))
    return r1, r2


def wsr_grid(G, sigma2, w, p_bar, points: int = 200) -> float:
    """Exhaustive ``points x points`` power grid for K = 2, N = 1."""
    g1 = np.linspace(0.0, p_bar[0], points)
    g2 = np.linspace(0.0, p_bar[1], points)
    P1, P2 = np.meshgrid(g1, g2, indexing="ij")
    r1, r2 = two_link_rates(G, sigma2, P1, P2)
    return float(np.max(w[0] * r1 + w[1] * r2))


def water_fill(gain_over_noise, total, caps):
    """Rate-maximising split of ``total`` with per-carrier caps (bisection on the level)."""
    a = np.asarray(gain_over_noise, dtype=float)
    caps = np.asarray(caps, dtype=float)
    if total >= caps.sum():
        return caps.copy()
    lo, hi = 0.0, total + 1.0 / a.min()
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        p = np.clip(mu - 1.0 / a, 0.0, caps)
        if p.sum() > total:
            hi = mu
        else:
            lo = mu
    return np.clip(lo - 1.0 / a, 0.0, caps)


def single_link_ee(gain_over_noise, p_bar, caps, p_c, iters: int = 200):
    """Best ``R(P) / (P + p_c)`` over the total power by golden-section search."""
    a = np.asarray(gain_over_noise, dtype=float)

    def ee(P):
        p = water_fill(a, P, caps)
        return np.sum(np.log1p(a * p)) / (p.sum() + p_c)

    lo, hi = 0.0, min(p_bar, float(np.sum(caps)))
    x1, x2 = hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo)
    f1, f2 = ee(x1), ee(x2)
    for _ in range(iters):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = ee(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = ee(x1)
    P = 0.5 * (lo + hi)
    return ee(P), P


def log_ratio_hessian_fd(x, y, h: float = 1e-4):
    """Hessian of ``log(1 + x / y)`` by central differences."""
    def f(a, b):
        return np.log1p(a / b)
    hx, hy = h * max(1.0, abs(x)), h * max(1.0, abs(y))
    fxx = (f(x + hx, y) - 2 * f(x, y) + f(x - hx, y)) / hx ** 2
    fyy = (f(x, y + hy) - 2 * f(x, y) + f(x, y - hy)) / hy ** 2
    fxy = (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy)
           + f(x - hx, y - hy)) / (4 * hx * hy)
    return np.array([[fxx, fxy], [fxy, fyy]])


def log_ratio_hessian_exact(x, y):
    """Closed-form Hessian of ``log(1 + x / y) = log(x + y) - log(y)``."""
    a = 1.0 / (x + y) ** 2
    return np.array([[-a, -a], [-a, -a + 1.0 / y ** 2]])


def cvxpy_socp(c, blocks):
    """Solve ``min c x`` over cone blocks with cvxpy (independent modelling route)."""
    import cvxpy as cp

    x = cp.Variable(len(c))
    cons = []
    for b in blocks:
        e = b.rows @ x + b.offset
        if b.cone == "zero":
            cons.append(e == 0)
        elif b.cone == "nonneg":
            cons.append(e >= 0)
        elif b.cone == "soc":
            cons.append(cp.SOC(e[0], e[1:]))
        else:
            cons.append(cp.SOC((e[0] + e[1]) / np.sqrt(2.0),
                               cp.hstack([(e[0] - e[1]) / np.sqrt(2.0), e[2:]])))
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.status, prob.value, x.value
