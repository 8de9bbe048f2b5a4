"""Named ensembles and closed-form cusp data for symmetric atomic models."""
from __future__ import annotations

import numpy as np

from .density import EnsembleSpec, Flat


def semicircle(N: int = 2, beta: int = 1) -> EnsembleSpec:
    """Zero expectation, flat variance ``1/N``."""
    return EnsembleSpec(np.zeros(N), Flat(1.0), beta)


def reference_ensemble(N: int, alpha: float = 0.0, beta: int = 1) -> EnsembleSpec:
    """``diag(+-1) + sqrt(1 - alpha N^{-1/2}) U`` with floor(N/2) entries -1."""
    a = np.concatenate([-np.ones(N // 2), np.ones(N - N // 2)])
    return EnsembleSpec(a, Flat(1.0 - alpha / np.sqrt(N)), beta)


def deformed_wigner(N: int, t: float = 0.0, beta: int = 2) -> EnsembleSpec:
    """``diag(1,...,1,-1,...,-1) + sqrt(1 + t) W``; exact cusp at ``t = 0``."""
    a = np.concatenate([np.ones(N - N // 2), -np.ones(N // 2)])
    return EnsembleSpec(a, Flat(1.0 + t), beta)


def atomic(N: int, atoms, weights, variance: float, beta: int = 1) -> EnsembleSpec:
    """Flat ensemble whose expectation takes the values ``atoms`` with the given weights."""
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    counts = np.floor(weights / weights.sum() * N).astype(int)
    counts[np.argsort(-weights)[: N - counts.sum()]] += 1
    a = np.repeat(atoms, counts)
    return EnsembleSpec(np.sort(a), Flat(variance), beta)


def symmetric_cusp_variance(atoms, weights) -> float:
    """Variance at which a symmetric atomic flat model forms a cusp at 0."""
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    return 1.0 / float(np.sum(weights / atoms**2))


def symmetric_cusp_slope(atoms, weights) -> float:
    """Slope parameter of that cusp: ``S2 / S4^{1/4}`` with ``Sk = sum w / a^k``."""
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    s2 = np.sum(weights / atoms**2)
    s4 = np.sum(weights / atoms**4)
    return float(s2 / s4**0.25)


def matched_four_atom(t_star: float, split: float = 0.3):
    """Atoms and variance of a four-atom symmetric model reaching a slope-1 cusp at ``t_star``.

    Atoms sit at ``kappa * (+-1 +- split)`` with ``kappa`` chosen so the slope is 1.
    """
    base = np.array([-1 - split, -1 + split, 1 - split, 1 + split])
    w = np.full(4, 0.25)
    kappa = symmetric_cusp_slope(base, w)
    atoms = kappa * base
    v = symmetric_cusp_variance(atoms, w) - t_star
    if v <= 0:
        raise ValueError("t_star too large for this split")
    return atoms, w, v
