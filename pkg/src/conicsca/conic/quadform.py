"""Factored PSD quadratic forms and their real embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QuadraticForm", "embed_complex", "stack_complex", "unstack_complex"]


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """Quadratic function ``h(x) = ||F x||^2 + 2 Re(b^H x) + c``.

    The PSD part ``A = F^H F`` is only ever held through its factor ``F``.
    A form with zero factor rows is affine.

    Parameters
    ----------
    factor : (k, n) array
        PSD factor. Complex entries are allowed when ``complex_domain``.
    linear : (n,) array
        The vector ``b``.
    constant : float
        The constant ``c``.
    complex_domain : bool
        Whether the form is a function of ``x`` in C^n.
    """

    factor: np.ndarray
    linear: np.ndarray
    constant: float = 0.0
    complex_domain: bool = False

    def __post_init__(self):
        dtype = complex if self.complex_domain else float
        F = np.atleast_2d(np.asarray(self.factor, dtype=dtype))
        b = np.asarray(self.linear, dtype=dtype).reshape(-1)
        if F.shape[1] != b.size:
            if F.size == 0:
                F = np.zeros((0, b.size), dtype=dtype)
            else:
                raise ValueError(
                    f"factor has {F.shape[1]} columns but linear term has {b.size} entries")
        c = complex(self.constant)
        if abs(c.imag) > 0:
            raise ValueError("constant term must be real")
        object.__setattr__(self, "factor", F)
        object.__setattr__(self, "linear", b)
        object.__setattr__(self, "constant", float(c.real))

    # -- constructors -----------------------------------------------------
    @classmethod
    def affine(cls, coef, const=0.0) -> "QuadraticForm":
        """Real affine form ``coef @ x + const``."""
        coef = np.asarray(coef, dtype=float).reshape(-1)
        return cls(np.zeros((0, coef.size)), coef / 2.0, const)

    @classmethod
    def variable(cls, n: int, index: int, scale: float = 1.0) -> "QuadraticForm":
        """The real affine form ``scale * x[index]``."""
        coef = np.zeros(n)
        coef[index] = scale
        return cls.affine(coef)

    @classmethod
    def constant_form(cls, n: int, value: float) -> "QuadraticForm":
        return cls.affine(np.zeros(n), value)

    @classmethod
    def from_residual(cls, factor, shift=None, const=0.0,
                      complex_domain=False) -> "QuadraticForm":
        """Form ``||F x + d||^2 + const``."""
        dtype = complex if complex_domain else float
        F = np.atleast_2d(np.asarray(factor, dtype=dtype))
        if shift is None:
            return cls(F, np.zeros(F.shape[1], dtype=dtype), const, complex_domain)
        d = np.asarray(shift, dtype=dtype).reshape(-1)
        b = F.conj().T @ d
        return cls(F, b, const + float(np.vdot(d, d).real), complex_domain)

    # -- basic properties -------------------------------------------------
    @property
    def n(self) -> int:
        return self.linear.size

    @property
    def rank(self) -> int:
        """Number of factor rows."""
        return self.factor.shape[0]

    @property
    def is_affine(self) -> bool:
        return self.rank == 0 or not np.any(self.factor)

    @property
    def coef(self) -> np.ndarray:
        """Linear coefficient ``2 b`` of a real form."""
        self._require_real()
        return 2.0 * self.linear

    def matrix(self) -> np.ndarray:
        """Assembled ``A = F^H F`` (for checks only)."""
        return self.factor.conj().T @ self.factor

    def _require_real(self):
        if self.complex_domain:
            raise ValueError("operation needs a real-domain form; embed it first")

    # -- evaluation -------------------------------------------------------
    def __call__(self, x) -> float:
        x = np.asarray(x)
        r = self.factor @ x
        val = np.vdot(r, r).real + 2.0 * np.vdot(self.linear, x).real + self.constant
        return float(val)

    def gradient(self, x) -> np.ndarray:
        """Real gradient. For a complex form this is the conjugate gradient ``A x + b``."""
        x = np.asarray(x)
        g = self.factor.conj().T @ (self.factor @ x) + self.linear
        return g if self.complex_domain else 2.0 * g

    def linearize(self, y) -> "QuadraticForm":
        """First-order Taylor expansion at ``y`` as an affine real form."""
        self._require_real()
        y = np.asarray(y, dtype=float)
        g = self.gradient(y)
        return QuadraticForm.affine(g, self(y) - g @ y)

    # -- algebra ----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return QuadraticForm(self.factor, self.linear, self.constant + other,
                                 self.complex_domain)
        if not isinstance(other, QuadraticForm):
            return NotImplemented
        if other.n != self.n or other.complex_domain != self.complex_domain:
            raise ValueError("forms live on different domains")
        return QuadraticForm(np.vstack([self.factor, other.factor]),
                             self.linear + other.linear,
                             self.constant + other.constant,
                             self.complex_domain)

    __radd__ = __add__

    def __mul__(self, s):
        s = float(s)
        if s < 0 and not self.is_affine:
            raise ValueError("negative multiple of a PSD quadratic is not convex")
        F = self.factor * np.sqrt(max(s, 0.0)) if self.rank else self.factor
        return QuadraticForm(F, self.linear * s, self.constant * s, self.complex_domain)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        if not other.is_affine:
            raise ValueError("only affine forms can be subtracted")
        return self + (-other)

    def lift(self, n_total: int, index) -> "QuadraticForm":
        """Place the form's variables at positions ``index`` of a longer vector."""
        index = np.asarray(index, dtype=int).reshape(-1)
        if index.size != self.n:
            raise ValueError(f"index has {index.size} entries, form has {self.n} variables")
        dtype = self.factor.dtype
        F = np.zeros((self.rank, n_total), dtype=dtype)
        F[:, index] = self.factor
        b = np.zeros(n_total, dtype=dtype)
        b[index] = self.linear
        return QuadraticForm(F, b, self.constant, self.complex_domain)

    def pad(self, n_total: int) -> "QuadraticForm":
        """Append unused trailing variables."""
        if n_total == self.n:
            return self
        return self.lift(n_total, np.arange(self.n))

    def compact(self, tol: float = 0.0) -> "QuadraticForm":
        """Drop all-zero factor rows."""
        keep = np.any(np.abs(self.factor) > tol, axis=1)
        if keep.all():
            return self
        return QuadraticForm(self.factor[keep], self.linear, self.constant,
                             self.complex_domain)

    def as_residual(self, tol: float = 1e-10):
        """Rewrite a real form as ``||F x + d||^2 + e`` with ``e`` a constant.

        Needed for quadratic-over-linear cones. Raises ``ValueError`` when the
        linear term is outside the range of ``F^T``.
        """
        self._require_real()
        if not np.any(self.linear):
            return self.factor, np.zeros(self.rank), self.constant
        d, *_ = np.linalg.lstsq(self.factor.T, self.linear, rcond=None)
        resid = self.factor.T @ d - self.linear
        if np.linalg.norm(resid) > tol * (1.0 + np.linalg.norm(self.linear)):
            raise ValueError("linear term is not in the range of the factor")
        return self.factor, d, self.constant - float(d @ d)


def embed_complex(quad: QuadraticForm) -> QuadraticForm:
    """Real embedding of a complex form on the layout ``[Re x; Im x]``.

    ``||F x||^2`` becomes ``||[[Re F, -Im F], [Im F, Re F]] xi||^2`` and
    ``2 Re(b^H x)`` becomes ``2 [Re b; Im b]^T xi``.

    Examples
    --------
    >>> q = QuadraticForm(np.ones((1, 1)), np.zeros(1), 0.0, complex_domain=True)
    >>> embed_complex(q)(np.array([1.0, 1.0]))
    2.0
    """
    if not quad.complex_domain:
        raise ValueError("form is already real")
    F, b = quad.factor, quad.linear
    Fr, Fi = F.real, F.imag
    F_emb = np.block([[Fr, -Fi], [Fi, Fr]]) if quad.rank else np.zeros((0, 2 * quad.n))
    return QuadraticForm(F_emb, np.concatenate([b.real, b.imag]), quad.constant)


def stack_complex(x) -> np.ndarray:
    """``[Re x; Im x]``."""
    x = np.asarray(x)
    return np.concatenate([x.real, x.imag]).astype(float)


def unstack_complex(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n = xi.size // 2
    return xi[:n] + 1j * xi[n:]
