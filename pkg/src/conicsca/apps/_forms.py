"""Helpers shared by the application builders."""

from __future__ import annotations

import numpy as np

from ..conic import QuadraticForm, embed_complex


def complex_form(factor, const: float = 0.0) -> QuadraticForm:
    """Complex form ``||F x||^2 + const`` with no linear term."""
    F = np.atleast_2d(np.asarray(factor, dtype=complex))
    return QuadraticForm(F, np.zeros(F.shape[1], dtype=complex), const, complex_domain=True)


def lift_complex(quad: QuadraticForm, width: int, offset: int = 0) -> QuadraticForm:
    """Embed a complex form on ``C^m`` and place ``[Re; Im]`` at ``offset``."""
    m = quad.n
    idx = offset + np.arange(2 * m)
    return embed_complex(quad).lift(width, idx)


def affine_sum(width: int, index, coef=1.0, const: float = 0.0) -> QuadraticForm:
    """``const + sum coef_i v[index_i]``."""
    c = np.zeros(width)
    np.add.at(c, np.asarray(index, dtype=int), coef)
    return QuadraticForm.affine(c, const)


def scale_to(ratio: np.ndarray, target: float) -> float:
    """Factor ``s`` with ``max(s^2 ratio) = target`` for quadratic loads ``ratio``."""
    worst = float(np.max(ratio))
    return np.sqrt(target / worst) if worst > 0 else 1.0
