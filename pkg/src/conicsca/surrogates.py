"""Convex upper estimates for ratio constraints ``l <= h1/h2 <= u``.

Each surrogate is anchored at a point ``y`` of the problem's real variable
vector and produces cone blocks for ``F(x; y) <= 0`` (or ``<= q`` when a
feasibility slack is supplied). Surrogates are immutable; :meth:`reanchor`
returns a new one. Six constructions are provided:

========  ===========================================  =====================
kind      nonconvex function ``f``                     requirements
========  ===========================================  =====================
app1      ``l h2 - h1`` (AM-GM bound on ``l h2``)      affine h1, h2, l
app2      ``l h2 - h1`` (DC split of ``l h2``)          affine h1, h2, l
app3      ``h1 / h2 - u``                               affine positive h1, h2
app4      ``h2 - h1 / l``                               convex quadratic h1, h2
app5      ``4 (l z - h1)``                              convex quadratic h1
app6      ``h1 / u - h2``                               convex quadratic h1, h2
========  ===========================================  =====================
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conic import ConeBlock, QuadraticForm, quad_epigraph, quad_over_lin

__all__ = [
    "Surrogate", "App1", "App2", "App3", "App4", "App5", "App6",
    "ConditionReport", "SamplingError", "verify_conditions", "finite_gradient",
    "random_surrogate", "KINDS", "Y_MIN", "Y_MAX",
]

Y_MIN = 1e-9
Y_MAX = 1e12
KINDS = ("app1", "app2", "app3", "app4", "app5", "app6")


def _clamp(y: float) -> float:
    return float(min(max(y, Y_MIN), Y_MAX))


def _row(form: QuadraticForm, width: int):
    """Coefficient row and constant of an affine form padded to ``width``."""
    coef = np.zeros(width)
    coef[:form.n] = form.coef
    return coef, form.constant


def _slack_row(width: int, slack) -> np.ndarray:
    row = np.zeros(width)
    if slack is not None:
        row[slack] = 1.0
    return row


def _as_form(n: int, obj) -> QuadraticForm:
    """Accept a variable index, a constant or an affine form."""
    if isinstance(obj, QuadraticForm):
        return obj
    if isinstance(obj, (int, np.integer)):
        return QuadraticForm.variable(n, int(obj))
    if isinstance(obj, float):
        return QuadraticForm.constant_form(n, obj)
    raise TypeError(f"cannot interpret {obj!r} as an affine expression")


@dataclass(frozen=True, eq=False)
class Surrogate:
    """Common interface. Subclasses fill in the function-specific parts."""

    point: np.ndarray

    kind = "base"
    relaxable = True

    @property
    def n(self) -> int:
        return self.point.size

    def original(self, v) -> float:
        """The nonconvex function ``f``."""
        raise NotImplementedError

    def value(self, v) -> float:
        """The surrogate ``F(v; y)``."""
        raise NotImplementedError

    def blocks(self, width: int | None = None, slack: int | None = None) -> list:
        """Cone blocks for ``F(v; y) <= q`` (``q = 0`` without a slack)."""
        raise NotImplementedError

    def reanchor(self, v) -> "Surrogate":
        """Anchor update ``y <- g(v)``."""
        return replace(self, point=np.asarray(v, dtype=float).copy())

    def scale(self, v) -> float:
        """Magnitude used to normalise constraint violations."""
        return 1.0

    def in_domain(self, v) -> bool:
        return True

    def safeguard(self, v) -> "Surrogate | None":
        """Return a stiffer surrogate when ``F`` failed to bound ``f`` at ``v``."""
        return None

    def violation(self, v) -> float:
        return self.original(v) / self.scale(v)


# ---------------------------------------------------------------------------
# App1 / App2 : l h2 <= h1 with affine pieces
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class _Bilinear(Surrogate):
    h1: QuadraticForm = None
    h2: QuadraticForm = None
    l: QuadraticForm = None

    def __post_init__(self):
        n = np.asarray(self.point).size
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "l", _as_form(n, self.l))
        for name in ("h1", "h2", "l"):
            f = getattr(self, name)
            if f.complex_domain or not f.is_affine:
                raise ValueError(f"{self.kind}: {name} must be a real affine form")
            if f.n != n:
                raise ValueError(f"{self.kind}: {name} has {f.n} variables, expected {n}")

    def original(self, v):
        return self.l(v) * self.h2(v) - self.h1(v)

    def scale(self, v):
        return 1.0 + abs(self.l(v) * self.h2(v)) + abs(self.h1(v))

    def in_domain(self, v):
        return self.l(v) > 0 and self.h1(v) > 0 and self.h2(v) > 0


@dataclass(frozen=True, eq=False)
class App1(_Bilinear):
    """``(y/2) l^2 + h2^2 / (2y) - h1 <= 0`` with ``y = h2 / l``."""

    y: float = field(default=None)
    kind = "app1"

    def __post_init__(self):
        super().__post_init__()
        if self.y is None:
            lv, hv = self.l(self.point), self.h2(self.point)
            if lv <= 0 or hv < 0:
                raise ValueError(f"app1: anchor ratio h2/l needs l > 0 and h2 >= 0 "
                                 f"(got l={lv:.3g}, h2={hv:.3g})")
            object.__setattr__(self, "y", _clamp(hv / lv))
        elif self.y <= 0:
            raise ValueError("app1: anchor ratio must be positive")

    def reanchor(self, v):
        return replace(self, point=np.asarray(v, dtype=float).copy(), y=None)

    def value(self, v):
        y = self.y
        return 0.5 * y * self.l(v) ** 2 + self.h2(v) ** 2 / (2 * y) - self.h1(v)

    def blocks(self, width=None, slack=None):
        width = width or self.n
        y = self.y
        a, a0 = _row(self.h1, width)
        lr, l0 = _row(self.l, width)
        hr, h0 = _row(self.h2, width)
        ry, iy = np.sqrt(y / 2.0), 1.0 / np.sqrt(2.0 * y)
        rows = np.vstack([a + _slack_row(width, slack), np.zeros(width), ry * lr, iy * hr])
        return [ConeBlock(rows, [a0, 0.5, ry * l0, iy * h0], "rsoc")]


@dataclass(frozen=True, eq=False)
class App2(_Bilinear):
    """``(l + h2)^2 / 4 - lin[(l - h2)^2 / 4] - h1 <= 0`` linearised at the anchor."""

    kind = "app2"

    def _hbar_lin(self):
        y = self.point
        d = self.l(y) - self.h2(y)
        grad = 0.5 * d * (self.l.coef - self.h2.coef)
        return QuadraticForm.affine(grad, 0.25 * d * d - grad @ y)

    def value(self, v):
        return 0.25 * (self.l(v) + self.h2(v)) ** 2 - self._hbar_lin()(v) - self.h1(v)

    def blocks(self, width=None, slack=None):
        width = width or self.n
        rhs = self.h1 + self._hbar_lin()
        a, a0 = _row(rhs, width)
        s = self.l + self.h2
        sr, s0 = _row(s, width)
        rows = np.vstack([a + _slack_row(width, slack), np.zeros(width), 0.5 * sr])
        return [ConeBlock(rows, [a0, 0.5, 0.5 * s0], "rsoc")]


# ---------------------------------------------------------------------------
# App3 : h1 / h2 <= u with affine positive h1, h2 and slack z >= 1 / h2
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class App3(Surrogate):
    """``(y/2) h1^2 + z^2 / (2y) - u <= 0`` and ``h2 z >= 1`` with ``y = 1/(h1 h2)``."""

    h1: QuadraticForm = None
    h2: QuadraticForm = None
    u: QuadraticForm = None
    z: int = None
    y: float = field(default=None)
    kind = "app3"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        n = self.point.size
        object.__setattr__(self, "u", _as_form(n, self.u))
        for name in ("h1", "h2", "u"):
            f = getattr(self, name)
            if f.complex_domain or not f.is_affine or f.n != n:
                raise ValueError(f"app3: {name} must be a real affine form on {n} variables")
        if self.z is None or not 0 <= self.z < n:
            raise ValueError("app3: slack index z is required")
        if self.y is None:
            a, b = self.h1(self.point), self.h2(self.point)
            if a <= 0 or b <= 0:
                raise ValueError(f"app3: anchor needs h1 > 0 and h2 > 0 (got {a:.3g}, {b:.3g})")
            object.__setattr__(self, "y", _clamp(1.0 / (a * b)))

    def reanchor(self, v):
        return replace(self, point=np.asarray(v, dtype=float).copy(), y=None)

    def original(self, v):
        return self.h1(v) / self.h2(v) - self.u(v)

    def value(self, v):
        y = self.y
        return 0.5 * y * self.h1(v) ** 2 + 1.0 / (2 * y * self.h2(v) ** 2) - self.u(v)

    def scale(self, v):
        return 1.0 + abs(self.h1(v) / self.h2(v)) + abs(self.u(v))

    def in_domain(self, v):
        return self.h1(v) > 0 and self.h2(v) > 0

    def tight_slack(self, v) -> float:
        return 1.0 / self.h2(v)

    def blocks(self, width=None, slack=None):
        width = width or self.n
        y = self.y
        ur, u0 = _row(self.u, width)
        ar, a0 = _row(self.h1, width)
        br, b0 = _row(self.h2, width)
        ez = np.zeros(width)
        ez[self.z] = 1.0
        ry, iy = np.sqrt(y / 2.0), 1.0 / np.sqrt(2.0 * y)
        main = ConeBlock(np.vstack([ur + _slack_row(width, slack), np.zeros(width),
                                    ry * ar, iy * ez]),
                         [u0, 0.5, ry * a0, 0.0], "rsoc")
        coupling = ConeBlock(np.vstack([br, 0.5 * ez, np.zeros(width)]), [b0, 0.0, 1.0], "rsoc")
        return [main, coupling]


# ---------------------------------------------------------------------------
# App4 : h2 <= h1 / l, linearise the convex h1 / l
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class App4(Surrogate):
    """``h2(x) - lin[h1 / l](x) <= 0`` linearised at the anchor."""

    h1: QuadraticForm = None
    h2: QuadraticForm = None
    l: QuadraticForm = None
    kind = "app4"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        n = self.point.size
        object.__setattr__(self, "l", _as_form(n, self.l))
        for name in ("h1", "h2", "l"):
            f = getattr(self, name)
            if f.complex_domain or f.n != n:
                raise ValueError(f"app4: {name} must be a real form on {n} variables")
        if not self.l.is_affine:
            raise ValueError("app4: l must be affine")
        if self.l(self.point) <= 0:
            raise ValueError("app4: anchor needs l > 0")

    def _lin(self):
        y = self.point
        lv, hv = self.l(y), self.h1(y)
        grad = self.h1.gradient(y) / lv - hv / lv ** 2 * self.l.coef
        return QuadraticForm.affine(grad, hv / lv - grad @ y)

    def original(self, v):
        return self.h2(v) - self.h1(v) / self.l(v)

    def value(self, v):
        return self.h2(v) - self._lin()(v)

    def scale(self, v):
        return 1.0 + abs(self.h2(v)) + abs(self.h1(v) / self.l(v))

    def in_domain(self, v):
        return self.l(v) > 0

    def blocks(self, width=None, slack=None):
        width = width or self.n
        bound = self._lin().pad(width)
        if slack is not None:
            bound = bound + QuadraticForm.variable(width, slack)
        return quad_epigraph(self.h2.pad(width), bound)


# ---------------------------------------------------------------------------
# App5 : l z <= h1 via (l + z)^2 - (l - z)^2 = 4 l z
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class App5(Surrogate):
    """``(l + z)^2 - lin[(l - z)^2 + 4 h1] <= 0`` linearised at the anchor.

    The caller pairs it with ``h2(x) <= z``.
    """

    h1: QuadraticForm = None
    l: QuadraticForm = None
    z: QuadraticForm = None
    kind = "app5"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        n = self.point.size
        object.__setattr__(self, "l", _as_form(n, self.l))
        object.__setattr__(self, "z", _as_form(n, self.z))
        for name in ("h1", "l", "z"):
            f = getattr(self, name)
            if f.complex_domain or f.n != n:
                raise ValueError(f"app5: {name} must be a real form on {n} variables")
        if not (self.l.is_affine and self.z.is_affine):
            raise ValueError("app5: l and z must be affine")

    def _lin(self):
        y = self.point
        d = self.l(y) - self.z(y)
        grad = 2.0 * d * (self.l.coef - self.z.coef) + 4.0 * self.h1.gradient(y)
        return QuadraticForm.affine(grad, d * d + 4.0 * self.h1(y) - grad @ y)

    def original(self, v):
        return 4.0 * (self.l(v) * self.z(v) - self.h1(v))

    def value(self, v):
        return (self.l(v) + self.z(v)) ** 2 - self._lin()(v)

    def scale(self, v):
        return 1.0 + 4.0 * abs(self.l(v) * self.z(v)) + 4.0 * abs(self.h1(v))

    def in_domain(self, v):
        return self.l(v) > 0 and self.z(v) > 0

    def blocks(self, width=None, slack=None):
        width = width or self.n
        a, a0 = _row(self._lin(), width)
        sr, s0 = _row(self.l + self.z, width)
        rows = np.vstack([a + _slack_row(width, slack), np.zeros(width), sr])
        return [ConeBlock(rows, [a0, 0.5, s0], "rsoc")]


# ---------------------------------------------------------------------------
# App6 : h1 / u <= h2, linearise the convex h2
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class App6(Surrogate):
    """``h1(x) / u - lin[h2](x) <= 0`` linearised at the anchor."""

    h1: QuadraticForm = None
    h2: QuadraticForm = None
    u: QuadraticForm = None
    kind = "app6"

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        n = self.point.size
        object.__setattr__(self, "u", _as_form(n, self.u))
        for name in ("h1", "h2", "u"):
            f = getattr(self, name)
            if f.complex_domain or f.n != n:
                raise ValueError(f"app6: {name} must be a real form on {n} variables")
        if self.u(self.point) <= 0:
            raise ValueError("app6: anchor needs u > 0")
        self.h1.as_residual()

    def original(self, v):
        return self.h1(v) / self.u(v) - self.h2(v)

    def value(self, v):
        return self.h1(v) / self.u(v) - self.h2.linearize(self.point)(v)

    def scale(self, v):
        return 1.0 + abs(self.h1(v) / self.u(v)) + abs(self.h2(v))

    def in_domain(self, v):
        return self.u(v) > 0

    def blocks(self, width=None, slack=None):
        width = width or self.n
        bound = self.h2.linearize(self.point).pad(width)
        if slack is not None:
            bound = bound + QuadraticForm.variable(width, slack)
        return quad_over_lin(self.h1.pad(width), self.u.pad(width), bound)


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------
class SamplingError(RuntimeError):
    """No sample point satisfied the surrogate's domain constraints."""


@dataclass(frozen=True)
class ConditionReport:
    """Numerical check of the upper-bound, tightness and gradient conditions.

    Attributes
    ----------
    upper_violation : float
        ``max(0, max_samples f - F)``.
    anchor_gap : float
        ``|f(y) - F(y; y)|``.
    grad_mismatch : float
        ``||grad f(y) - grad F(y; y)||_inf`` by central differences.
    """

    upper_violation: float
    anchor_gap: float
    grad_mismatch: float
    samples: int = 0

    def passes(self, tol_upper=1e-9, tol_gap=1e-9, tol_grad=1e-6) -> bool:
        return (self.upper_violation <= tol_upper and self.anchor_gap <= tol_gap
                and self.grad_mismatch <= tol_grad)


def finite_gradient(fn, v, rel_step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient with step ``rel_step * max(1, |v_i|)``."""
    v = np.asarray(v, dtype=float)
    g = np.empty_like(v)
    for i in range(v.size):
        h = rel_step * max(1.0, abs(v[i]))
        vp, vm = v.copy(), v.copy()
        vp[i] += h
        vm[i] -= h
        g[i] = (fn(vp) - fn(vm)) / (2 * h)
    return g


def verify_conditions(sur: Surrogate, f=None, samples: int = 200, rng=None,
                      at=None, radius: float = 1.0, max_tries: int = 100) -> ConditionReport:
    """Check the surrogate conditions numerically.

    Parameters
    ----------
    sur : Surrogate
        The anchored surrogate.
    f : callable, optional
        The nonconvex function; defaults to ``sur.original``.
    samples : int
        Number of domain points used for the upper-bound check.
    at : array, optional
        Point where tightness and gradients are compared. Defaults to the
        anchor. Passing another point emulates a stale anchor.
    radius : float
        Relative spread of the sampling cloud around ``at``.
    """
    rng = np.random.default_rng(rng)
    f = f or sur.original
    at = sur.point if at is None else np.asarray(at, dtype=float)
    if not sur.in_domain(at):
        raise SamplingError("check point lies outside the surrogate's domain")
    spread = radius * (1.0 + np.abs(at))
    worst = -np.inf
    got = tries = 0
    while got < samples:
        batch = at + spread * rng.standard_normal((samples, at.size))
        for v in batch:
            if got >= samples:
                break
            if sur.in_domain(v):
                worst = max(worst, f(v) - sur.value(v))
                got += 1
        tries += 1
        if tries > max_tries and got == 0:
            raise SamplingError("could not draw samples satisfying the domain constraints")
        spread = spread * 0.5 if got == 0 else spread
    gap = abs(f(at) - sur.value(at))
    mism = np.max(np.abs(finite_gradient(f, at) - finite_gradient(sur.value, at)))
    return ConditionReport(max(0.0, float(worst)), float(gap), float(mism), got)


# ---------------------------------------------------------------------------
# random instances for property sweeps
# ---------------------------------------------------------------------------
def _random_affine(rng, n, width, index):
    coef = np.zeros(width)
    coef[index] = rng.uniform(0.1, 2.0, size=n)
    return QuadraticForm.affine(coef, rng.uniform(0.5, 2.0))


def _random_quad(rng, n, width, index, k=None):
    k = k or int(rng.integers(1, n + 1))
    F = np.zeros((k, width))
    F[:, index] = rng.standard_normal((k, n))
    return QuadraticForm(F, np.zeros(width), rng.uniform(0.1, 2.0))


def random_surrogate(kind: str, rng=None, n: int = 3) -> Surrogate:
    """A random surrogate of the given kind anchored inside its domain.

    The variable vector is ``[x (n); l or u; z]``; affine pieces have
    positive coefficients so that they are positive on the positive orthant.
    """
    rng = np.random.default_rng(rng)
    width = n + 2
    idx = np.arange(n)
    lv, zv = n, n + 1
    point = np.concatenate([rng.uniform(0.2, 2.0, size=n), rng.uniform(0.3, 3.0, size=2)])
    if kind in ("app1", "app2"):
        cls = App1 if kind == "app1" else App2
        return cls(point=point, h1=_random_affine(rng, n, width, idx),
                   h2=_random_affine(rng, n, width, idx), l=lv)
    if kind == "app3":
        return App3(point=point, h1=_random_affine(rng, n, width, idx),
                    h2=_random_affine(rng, n, width, idx), u=lv, z=zv)
    if kind == "app4":
        return App4(point=point, h1=_random_quad(rng, n, width, idx),
                    h2=_random_quad(rng, n, width, idx), l=lv)
    if kind == "app5":
        return App5(point=point, h1=_random_quad(rng, n, width, idx), l=lv, z=zv)
    if kind == "app6":
        return App6(point=point, h1=_random_quad(rng, n, width, idx),
                    h2=_random_quad(rng, n, width, idx), u=lv)
    raise ValueError(f"unknown surrogate kind {kind!r}")
