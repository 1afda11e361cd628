"""Cognitive-radio multicast power minimisation.

Minimise ``||x||^2`` over the stacked beamformer ``x = [x_1; ...; x_G]``
subject to per-user SINR targets (App4 with constant ``l = alpha_i``) and
interference caps at the primary users. Variable layout: ``[Re x; Im x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bench.channels import db_to_lin, gen_rayleigh
from ..conic import QuadraticForm
from ..sca import QuadConstraint, ScaProblem
from ..surrogates import App4
from ._forms import complex_form, lift_complex

__all__ = [
    "CognitiveInstance", "BlockForms", "random_instance", "build_block_matrices",
    "sinrs", "interference", "build_sca_problem", "stack", "unstack", "matched_filter_power",
]


@dataclass(frozen=True, eq=False)
class CognitiveInstance:
    """Secondary channels ``h`` (M, N), group labels (M,), primary channels ``l`` (L, N)."""

    h: np.ndarray
    groups: np.ndarray
    l: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray = None
    n_groups: int = None

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        M, N = h.shape
        l = np.asarray(self.l, dtype=complex).reshape(-1, N)
        groups = np.asarray(self.groups, dtype=int).reshape(-1)
        G = int(groups.max()) + 1 if self.n_groups is None else int(self.n_groups)
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (M,)).copy()
        beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (l.shape[0],)).copy()
        sigma2 = np.ones(M) if self.sigma2 is None else \
            np.broadcast_to(np.asarray(self.sigma2, dtype=float), (M,)).copy()
        if groups.size != M or groups.min() < 0 or groups.max() >= G:
            raise ValueError("every user needs a group label in [0, G)")
        if np.any(alpha <= 0) or np.any(sigma2 <= 0):
            raise ValueError("SINR targets and noise variances must be positive")
        if np.any(beta < 0):
            raise ValueError("interference caps must be nonnegative")
        for name, val in (("h", h), ("l", l), ("groups", groups), ("alpha", alpha),
                          ("beta", beta), ("sigma2", sigma2), ("n_groups", G)):
            object.__setattr__(self, name, val)

    @property
    def N(self) -> int:
        return self.h.shape[1]

    @property
    def M(self) -> int:
        return self.h.shape[0]

    @property
    def L(self) -> int:
        return self.l.shape[0]

    @property
    def G(self) -> int:
        return self.n_groups


def random_instance(rng, N: int, G: int = 2, users_per_group: int = 4, L: int = 2,
                    alpha_db: float = 10.0, beta_db: float = 5.0,
                    sigma2: float = 1.0) -> CognitiveInstance:
    rng = np.random.default_rng(rng)
    M = G * users_per_group
    return CognitiveInstance(h=gen_rayleigh(rng, (M, N)),
                             groups=np.repeat(np.arange(G), users_per_group),
                             l=gen_rayleigh(rng, (L, N)) if L else np.zeros((0, N)),
                             alpha=db_to_lin(alpha_db), beta=db_to_lin(beta_db),
                             sigma2=sigma2, n_groups=G)


def stack(xs) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=complex) for x in xs])


def unstack(x, G: int) -> np.ndarray:
    """Rows are the per-group beamformers."""
    return np.asarray(x, dtype=complex).reshape(G, -1)


@dataclass(frozen=True, eq=False)
class BlockForms:
    """Complex forms on the stacked beamformer: signal, interference, caps."""

    signal: tuple
    interference: tuple
    caps: tuple


def _block_row(vec, g, G):
    N = vec.size
    row = np.zeros(G * N, dtype=complex)
    row[g * N:(g + 1) * N] = vec
    return row


def build_block_matrices(inst: CognitiveInstance) -> BlockForms:
    G = inst.G
    signal, interf = [], []
    for hi, gi in zip(inst.h, inst.groups):
        signal.append(complex_form(_block_row(hi, gi, G)[None, :]))
        rows = [_block_row(hi, k, G) for k in range(G) if k != gi]
        interf.append(complex_form(np.array(rows) if rows else np.zeros((0, G * inst.N))))
    caps = [complex_form(np.array([_block_row(lj, g, G) for g in range(G)])) for lj in inst.l]
    return BlockForms(tuple(signal), tuple(interf), tuple(caps))


def sinrs(inst: CognitiveInstance, x) -> np.ndarray:
    """Per-user SINR evaluated on the unstacked beamformers."""
    X = unstack(x, inst.G)
    gains = np.abs(inst.h @ X.T) ** 2
    own = gains[np.arange(inst.M), inst.groups]
    return own / (gains.sum(axis=1) - own + inst.sigma2)


def interference(inst: CognitiveInstance, x) -> np.ndarray:
    X = unstack(x, inst.G)
    return (np.abs(inst.l @ X.T) ** 2).sum(axis=1)


def matched_filter_power(inst: CognitiveInstance) -> float:
    """Closed-form optimum ``alpha sigma^2 / ||h||^2`` for one user and no primaries."""
    if inst.M != 1 or inst.L != 0:
        raise ValueError("closed form needs a single user and no primary users")
    return float(inst.alpha[0] * inst.sigma2[0] / np.sum(np.abs(inst.h[0]) ** 2))


def build_sca_problem(inst: CognitiveInstance, rng=None, x0=None):
    """The SCA problem and a random (generally infeasible) start.

    The SINR surrogates are relaxable for the feasibility phase; the caps are not.
    """
    rng = np.random.default_rng(rng)
    forms = build_block_matrices(inst)
    m = inst.G * inst.N
    n = 2 * m
    if x0 is None:
        x0 = gen_rayleigh(rng, m)
    v0 = np.concatenate([np.real(x0), np.imag(x0)]).astype(float)
    objective = QuadraticForm(np.eye(n), np.zeros(n))
    constraints = [QuadConstraint(lift_complex(c, n), QuadraticForm.constant_form(n, b),
                                  relaxable=False, name=f"cap {j}")
                   for j, (c, b) in enumerate(zip(forms.caps, inst.beta))]
    surrogates = [App4(point=v0, h1=lift_complex(s, n), h2=lift_complex(q, n) + float(s2),
                       l=float(a))
                  for s, q, s2, a in zip(forms.signal, forms.interference, inst.sigma2, inst.alpha)]

    def metric(v):
        return float(v @ v)

    problem = ScaProblem(n=n, objective=objective, constraints=constraints,
                         surrogates=surrogates, metric=metric, name="cog-multicast")
    return problem, v0


def beamformer(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    m = v.size // 2
    return v[:m] + 1j * v[m:]
