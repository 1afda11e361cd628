"""Random channel draws for the experiments."""

from __future__ import annotations

import numpy as np

__all__ = ["gen_rayleigh", "gen_multicarrier", "TAP_VARIANCES", "db_to_lin", "dbm_to_watt"]

TAP_VARIANCES = np.exp(-3.0 * np.arange(6))


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_rayleigh(seed, dims) -> np.ndarray:
    """I.i.d. CN(0, 1) entries: real and imaginary parts have variance 1/2."""
    rng = _rng(seed)
    dims = tuple(np.atleast_1d(dims).astype(int))
    if any(d <= 0 for d in dims):
        raise ValueError("dimensions must be positive")
    return (rng.standard_normal(dims) + 1j * rng.standard_normal(dims)) / np.sqrt(2.0)


def link_distances(K: int) -> np.ndarray:
    """``d[k, l]`` from transmitter ``l`` at ``(l, 10)`` to receiver ``k`` at ``(k, 0)``."""
    pos = np.arange(1, K + 1, dtype=float)
    return np.hypot(pos[:, None] - pos[None, :], 10.0)


def gen_multicarrier(seed, K: int, N: int, shadow_std: float = 3.0,
                     shadow_scale: str = "db", taps=TAP_VARIANCES) -> np.ndarray:
    """Gains ``G[k, l, n]`` from transmitter ``l`` to receiver ``k`` on subcarrier ``n``.

    Path loss ``alpha d^-3`` with lognormal shadowing ``alpha`` drawn once per
    link, and a multipath response from the ``N``-point DFT of the zero-padded
    complex Gaussian tap vector.

    Parameters
    ----------
    shadow_scale : {"db", "natural"}
        ``"db"`` draws ``10^(N(0, std^2) / 10)``; ``"natural"`` draws ``exp(N(0, std^2))``.
    """
    if K <= 0 or N <= 0:
        raise ValueError("K and N must be positive")
    rng = _rng(seed)
    taps = np.asarray(taps, dtype=float)
    d = link_distances(K)
    z = shadow_std * rng.standard_normal((K, K))
    if shadow_scale == "db":
        shadow = 10.0 ** (z / 10.0)
    elif shadow_scale == "natural":
        shadow = np.exp(z)
    else:
        raise ValueError("shadow_scale must be 'db' or 'natural'")
    imp = gen_rayleigh(rng, (K, K, taps.size)) * np.sqrt(taps)
    # explicit DFT so that N below the tap count folds taps instead of truncating
    phase = np.exp(-2j * np.pi * np.outer(np.arange(taps.size), np.arange(N)) / N)
    resp = imp @ phase
    return (shadow * d ** -3.0)[:, :, None] * np.abs(resp) ** 2
