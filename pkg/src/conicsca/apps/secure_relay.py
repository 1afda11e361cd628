"""Secure amplify-and-forward relay beamforming.

The relays apply weights ``w`` to maximise the worst secrecy rate
``min_m log(1 + gamma_d) - log(1 + gamma_em)`` under total and per-relay
power budgets. The SCA form minimises ``beta / alpha`` with

* ``(w^H (A + G) w + 1) / (w^H G w + 1) >= alpha``  (App4),
* ``(w^H (B_m + H_m) w + 1) / (w^H H_m w + 1) <= beta``  (App6),
* ``beta / alpha <= u``  (App3 with slack ``z``).

Variable layout: ``[Re w (K), Im w (K), alpha, beta, u, z]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bench.channels import db_to_lin, gen_rayleigh
from ..conic import QuadraticForm
from ..sca import QuadConstraint, ScaProblem
from ..surrogates import App3, App4, App6
from ._forms import complex_form, lift_complex, scale_to

__all__ = [
    "SecureRelayInstance", "SecureRelayMatrices", "power_budgets", "random_instance",
    "build_matrices", "sinrs", "secrecy_rate", "build_sca_problem", "initial_point",
]


def power_budgets(K: int, P_tot: float) -> np.ndarray:
    """``P_tot / 2K`` on odd relays and ``2 P_tot / K`` on even ones (1-based)."""
    k = np.arange(1, K + 1)
    return np.where(k % 2 == 1, P_tot / (2 * K), 2 * P_tot / K)


@dataclass(frozen=True, eq=False)
class SecureRelayInstance:
    """Channels ``f, g`` (K,) and eavesdropper channels ``h`` (M, K)."""

    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    P_s: float
    P_tot: float
    P_k: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        f = np.asarray(self.f, dtype=complex).reshape(-1)
        g = np.asarray(self.g, dtype=complex).reshape(-1)
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        P_k = np.broadcast_to(np.asarray(self.P_k, dtype=float), f.shape).copy()
        if g.size != f.size or h.shape[1] != f.size:
            raise ValueError("channel vectors must all have K entries")
        if min(self.P_s, self.P_tot, self.sigma2) <= 0 or np.any(P_k <= 0):
            raise ValueError("powers and noise variance must be positive")
        for name, val in (("f", f), ("g", g), ("h", h), ("P_k", P_k)):
            object.__setattr__(self, name, val)

    @property
    def K(self) -> int:
        return self.f.size

    @property
    def M(self) -> int:
        return self.h.shape[0]


def random_instance(rng, K: int, M: int, P_s_db: float = 20.0, P_tot_db: float = 15.0,
                    sigma2: float = 1.0) -> SecureRelayInstance:
    """Rayleigh channels with the odd/even per-relay budget rule."""
    rng = np.random.default_rng(rng)
    P_tot = float(db_to_lin(P_tot_db))
    return SecureRelayInstance(f=gen_rayleigh(rng, K), g=gen_rayleigh(rng, K),
                               h=gen_rayleigh(rng, (M, K)), P_s=float(db_to_lin(P_s_db)),
                               P_tot=P_tot, P_k=power_budgets(K, P_tot), sigma2=sigma2)


@dataclass(frozen=True, eq=False)
class SecureRelayMatrices:
    """Factored complex forms on ``C^K``."""

    A: QuadraticForm
    G: QuadraticForm
    B: tuple
    H: tuple
    C: QuadraticForm
    C_k: tuple


def build_matrices(inst: SecureRelayInstance) -> SecureRelayMatrices:
    s = np.sqrt(inst.P_s / inst.sigma2)
    A = complex_form(s * (inst.g.conj() * inst.f)[None, :])
    G = complex_form(np.diag(inst.g.conj()))
    B = tuple(complex_form(s * (hm.conj() * inst.f)[None, :]) for hm in inst.h)
    H = tuple(complex_form(np.diag(hm.conj())) for hm in inst.h)
    c = np.sqrt(inst.P_s * np.abs(inst.f) ** 2 + inst.sigma2)
    C = complex_form(np.diag(c))
    C_k = tuple(complex_form(c[k] * np.eye(inst.K)[k][None, :]) for k in range(inst.K))
    return SecureRelayMatrices(A, G, B, H, C, C_k)


def sinrs(inst: SecureRelayInstance, w, mats: SecureRelayMatrices | None = None):
    """``(gamma_d, gamma_e)`` with ``gamma_e`` of shape (M,)."""
    mats = mats or build_matrices(inst)
    w = np.asarray(w, dtype=complex)
    gd = mats.A(w) / (mats.G(w) + 1.0)
    ge = np.array([B(w) / (H(w) + 1.0) for B, H in zip(mats.B, mats.H)])
    return gd, ge


def secrecy_rate(inst: SecureRelayInstance, w, mats=None) -> float:
    """Worst-eavesdropper secrecy rate in nats."""
    gd, ge = sinrs(inst, w, mats)
    return float(np.min(np.log1p(gd) - np.log1p(ge)))


def initial_point(inst: SecureRelayInstance, rng=None, fraction: float = 0.1,
                  mats=None) -> np.ndarray:
    """Random weights scaled so the tightest power budget is at ``fraction``."""
    rng = np.random.default_rng(rng)
    mats = mats or build_matrices(inst)
    w = gen_rayleigh(rng, inst.K)
    loads = np.array([mats.C(w) / inst.P_tot] + [Ck(w) / p for Ck, p in zip(mats.C_k, inst.P_k)])
    return w * scale_to(loads, fraction)


def build_sca_problem(inst: SecureRelayInstance, rng=None, w0=None, fraction: float = 0.1):
    """The SCA problem and a feasible start.

    Returns
    -------
    (ScaProblem, ndarray)
    """
    K = inst.K
    mats = build_matrices(inst)
    n = 2 * K + 4
    ia, ib, iu, iz = 2 * K, 2 * K + 1, 2 * K + 2, 2 * K + 3
    one = QuadraticForm.constant_form(n, 1.0)

    def lift(q):
        return lift_complex(q, n)

    A, G, C = lift(mats.A), lift(mats.G), lift(mats.C)
    B = [lift(b) for b in mats.B]
    H = [lift(h) for h in mats.H]

    constraints = [QuadConstraint(C, QuadraticForm.constant_form(n, inst.P_tot),
                                  name="total power")]
    constraints += [QuadConstraint(lift(Ck), QuadraticForm.constant_form(n, p), name=f"power {k}")
                    for k, (Ck, p) in enumerate(zip(mats.C_k, inst.P_k))]

    if w0 is None:
        w0 = initial_point(inst, rng, fraction, mats)

    def tighten(v):
        w = v[:K] + 1j * v[K:2 * K]
        gd, ge = sinrs(inst, w, mats)
        v[ia] = 1.0 + gd
        v[ib] = 1.0 + np.max(ge)
        v[iu] = v[ib] / v[ia]
        v[iz] = 1.0 / v[ia]
        return v

    x0 = tighten(np.concatenate([w0.real, w0.imag, np.zeros(4)]))
    surrogates = [App3(point=x0, h1=QuadraticForm.variable(n, ib),
                       h2=QuadraticForm.variable(n, ia), u=iu, z=iz),
                  App4(point=x0, h1=A + G + one, h2=G + one, l=ia)]
    surrogates += [App6(point=x0, h1=Bm + Hm + one, h2=Hm + one, u=ib) for Bm, Hm in zip(B, H)]

    def metric(v):
        return secrecy_rate(inst, v[:K] + 1j * v[K:2 * K], mats)

    problem = ScaProblem(n=n, objective=QuadraticForm.variable(n, iu), constraints=constraints,
                         surrogates=surrogates, tighten=tighten, metric=metric,
                         name="secure-relay")
    return problem, x0


def weights(v, K: int) -> np.ndarray:
    return np.asarray(v[:K]) + 1j * np.asarray(v[K:2 * K])
