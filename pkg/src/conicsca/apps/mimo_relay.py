"""Multi-pair MIMO relaying with max-min SINR fairness.

Relays apply a block-diagonal ``X = blkdiag(X_1, ..., X_R)``. Only the
``R N_R^2`` supported entries of ``vec(X)`` (column-major) are variables.
The epigraph form maximises ``theta`` subject to ``theta z_i <= signal_i``
(App5), ``interference_i + sigma_de^2 <= z_i`` and per-antenna power caps.

Variable layout: ``[Re x_S; Im x_S; theta; z_1..z_M]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bench.channels import db_to_lin, gen_rayleigh
from ..conic import QuadraticForm
from ..sca import QuadConstraint, ScaProblem
from ..surrogates import App5
from ._forms import complex_form, lift_complex, scale_to

__all__ = [
    "MimoRelayInstance", "VectorizedRelay", "random_instance", "support", "vectorize",
    "to_matrix", "sinrs_matrix", "antenna_powers", "build_sca_problem", "initial_point",
]


@dataclass(frozen=True, eq=False)
class MimoRelayInstance:
    """Source channels ``h`` (M, N) and destination channels ``l`` (M, N)."""

    h: np.ndarray
    l: np.ndarray
    R: int
    N_R: int
    sigma_s2: float
    P_bar: np.ndarray
    sigma_re2: float = 1.0
    sigma_de2: float = 1.0

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        l = np.atleast_2d(np.asarray(self.l, dtype=complex))
        N = self.R * self.N_R
        if h.shape[1] != N or l.shape != h.shape:
            raise ValueError(f"channels must have shape (M, {N})")
        P_bar = np.broadcast_to(np.asarray(self.P_bar, dtype=float), (N,)).copy()
        if min(self.sigma_s2, self.sigma_re2, self.sigma_de2) <= 0 or np.any(P_bar <= 0):
            raise ValueError("variances and power caps must be positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "P_bar", P_bar)

    @property
    def N(self) -> int:
        return self.R * self.N_R

    @property
    def M(self) -> int:
        return self.h.shape[0]


def random_instance(rng, R: int = 2, N_R: int = 2, M: int = 2, sigma_s2_db: float = 20.0,
                    P_R_db: float = 10.0) -> MimoRelayInstance:
    rng = np.random.default_rng(rng)
    N = R * N_R
    return MimoRelayInstance(h=gen_rayleigh(rng, (M, N)), l=gen_rayleigh(rng, (M, N)),
                             R=R, N_R=N_R, sigma_s2=float(db_to_lin(sigma_s2_db)),
                             P_bar=float(db_to_lin(P_R_db)) / N_R)


def support(R: int, N_R: int) -> np.ndarray:
    """Column-major positions of ``vec(X)`` inside the diagonal blocks."""
    N = R * N_R
    rows, cols = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    mask = (rows // N_R) == (cols // N_R)
    return np.flatnonzero(mask.T.ravel())


def to_matrix(xs, R: int, N_R: int) -> np.ndarray:
    """Block-diagonal ``X`` from its supported entries."""
    N = R * N_R
    vec = np.zeros(N * N, dtype=complex)
    vec[support(R, N_R)] = xs
    return vec.reshape(N, N).T


@dataclass(frozen=True, eq=False)
class VectorizedRelay:
    """Complex forms on the supported entries.

    ``cross[i][j]`` is ``|l_i^H X h_j|^2``, ``relay_noise[i]`` is
    ``||X^H l_i||^2``, ``leak[i]`` is ``sigma_s^2 sum_{j != i} cross[i][j] +
    sigma_re^2 relay_noise[i]`` and ``power[n]`` is ``e_n X B X^H e_n^H``.
    """

    index: np.ndarray
    cross: tuple
    relay_noise: tuple
    leak: tuple
    power: tuple


def _restrict(rows_full: np.ndarray, index: np.ndarray) -> np.ndarray:
    return np.atleast_2d(rows_full)[:, index]


def vectorize(inst: MimoRelayInstance) -> VectorizedRelay:
    N, M = inst.N, inst.M
    index = support(inst.R, inst.N_R)
    # vec is column-major: entry X[r, c] sits at c * N + r
    cross = []
    for i in range(M):
        row = []
        for j in range(M):
            # l_i^H X h_j = vec(l_i h_j^H)^H vec(X)
            a = np.outer(inst.l[i], inst.h[j].conj())
            row.append(complex_form(_restrict(a.T.ravel().conj(), index)))
        cross.append(tuple(row))
    relay_noise = []
    for i in range(M):
        F = np.zeros((N, N * N), dtype=complex)
        for c in range(N):
            F[c, c * N:(c + 1) * N] = inst.l[i].conj()
        relay_noise.append(complex_form(_restrict(F, index)))
    s, r = np.sqrt(inst.sigma_s2), np.sqrt(inst.sigma_re2)
    leak = []
    for i in range(M):
        rows = [s * cross[i][j].factor for j in range(M) if j != i]
        rows.append(r * relay_noise[i].factor)
        leak.append(complex_form(np.vstack(rows)))
    Phi = np.hstack([s * inst.h.T, r * np.eye(N)])      # B = Phi Phi^H
    power = []
    for n in range(N):
        F = np.zeros((Phi.shape[1], N * N), dtype=complex)
        for k in range(N):
            F[:, k * N + n] = Phi[k]
        power.append(complex_form(_restrict(F, index)))
    return VectorizedRelay(index, tuple(cross), tuple(relay_noise), tuple(leak), tuple(power))


def sinrs_matrix(inst: MimoRelayInstance, X) -> np.ndarray:
    """Per-destination SINR evaluated on the relay matrix ``X``."""
    T = inst.l.conj() @ X @ inst.h.T                    # T[i, j] = l_i^H X h_j
    g = np.abs(T) ** 2
    sig = inst.sigma_s2 * np.diag(g)
    interf = inst.sigma_s2 * (g.sum(axis=1) - np.diag(g))
    noise = inst.sigma_re2 * np.sum(np.abs(inst.l.conj() @ X) ** 2, axis=1)
    return sig / (interf + noise + inst.sigma_de2)


def antenna_powers(inst: MimoRelayInstance, X) -> np.ndarray:
    B = inst.sigma_s2 * inst.h.T @ inst.h.conj() + inst.sigma_re2 * np.eye(inst.N)
    return np.real(np.einsum("nk,kl,nl->n", X, B, X.conj()))


def sinrs_vectorized(inst: MimoRelayInstance, vr: VectorizedRelay, xs) -> np.ndarray:
    return np.array([inst.sigma_s2 * vr.cross[i][i](xs) / (vr.leak[i](xs) + inst.sigma_de2)
                     for i in range(inst.M)])


def initial_point(inst: MimoRelayInstance, rng=None, fraction: float = 0.9,
                  vr: VectorizedRelay | None = None) -> np.ndarray:
    """Random supported entries scaled so ``max_n P_n / P_bar_n = fraction``."""
    rng = np.random.default_rng(rng)
    vr = vr or vectorize(inst)
    xs = gen_rayleigh(rng, vr.index.size)
    loads = np.array([p(xs) for p in vr.power]) / inst.P_bar
    return xs * scale_to(loads, fraction)


def build_sca_problem(inst: MimoRelayInstance, rng=None, x0=None, fraction: float = 0.9):
    """The SCA problem and a feasible start. Objective is ``-theta``."""
    vr = vectorize(inst)
    S, M = vr.index.size, inst.M
    n = 2 * S + 1 + M
    it, iz = 2 * S, 2 * S + 1 + np.arange(M)
    if x0 is None:
        x0 = initial_point(inst, rng, fraction, vr)

    signal = [inst.sigma_s2 * lift_complex(vr.cross[i][i], n) for i in range(M)]
    denom = [lift_complex(vr.leak[i], n) + inst.sigma_de2 for i in range(M)]
    constraints = [QuadConstraint(denom[i], QuadraticForm.variable(n, iz[i]), name=f"leak {i}")
                   for i in range(M)]
    constraints += [QuadConstraint(lift_complex(p, n), QuadraticForm.constant_form(n, pb),
                                   name=f"antenna {k}")
                    for k, (p, pb) in enumerate(zip(vr.power, inst.P_bar))]
    constraints.append(QuadConstraint(QuadraticForm.variable(n, it, -1.0), relaxable=False,
                                      name="theta >= 0"))

    def tighten(v):
        v[iz] = [d(v) for d in denom]
        v[it] = min(s(v) / d for s, d in zip(signal, v[iz]))
        return v

    v0 = tighten(np.concatenate([x0.real, x0.imag, np.zeros(1 + M)]))
    surrogates = [App5(point=v0, h1=signal[i], l=it, z=int(iz[i])) for i in range(M)]

    def metric(v):
        return float(np.min(sinrs_matrix(inst, to_matrix(entries(v, S), inst.R, inst.N_R))))

    problem = ScaProblem(n=n, objective=QuadraticForm.variable(n, it, -1.0),
                         constraints=constraints, surrogates=surrogates, tighten=tighten,
                         metric=metric, name="mimo-relay")
    return problem, v0


def entries(v, S: int) -> np.ndarray:
    return np.asarray(v[:S]) + 1j * np.asarray(v[S:2 * S])
