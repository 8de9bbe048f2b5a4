"""Pairwise interaction sums for Dyson Brownian motion.

Each kernel has a numba implementation and a numpy twin; ``HAS_NUMBA``
selects between them at import time.
"""
from __future__ import annotations

import numpy as np

from .._accel import HAS_NUMBA, njit


@njit(cache=True)
def _pair_drift_jit(z, scale):
    n = z.size
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        zi = z[i]
        for j in range(n):
            if j != i:
                acc += 1.0 / (zi - z[j])
        out[i] = acc * scale
    return out


def _pair_drift_np(z, scale):
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, np.inf)
    return (1.0 / d).sum(axis=1) * scale


@njit(cache=True)
def _masked_drift_jit(zs, zl, short, far, scale):
    n = zs.size
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            if short[i, j]:
                acc += 1.0 / (zs[i] - zs[j])
            elif far[i, j]:
                acc += 1.0 / (zl[i] - zl[j])
        out[i] = acc * scale
    return out


def _masked_drift_np(zs, zl, short, far, scale):
    with np.errstate(divide="ignore"):
        ds = 1.0 / (zs[:, None] - zs[None, :])
        dl = 1.0 / (zl[:, None] - zl[None, :])
    np.fill_diagonal(ds, 0.0)
    np.fill_diagonal(dl, 0.0)
    return (np.where(short, ds, 0.0) + np.where(far & ~short, dl, 0.0)).sum(axis=1) * scale


@njit(cache=True)
def _laplacian_apply_jit(z, mask, f, scale):
    n = z.size
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i and mask[i, j]:
                d = z[i] - z[j]
                acc -= (f[i] - f[j]) / (d * d)
        out[i] = acc * scale
    return out


def _laplacian_apply_np(z, mask, f, scale):
    W = _coupling_np(z, mask, scale)
    return -(W * (f[:, None] - f[None, :])).sum(axis=1)


def _coupling_np(z, mask, scale):
    d = z[:, None] - z[None, :]
    np.fill_diagonal(d, np.inf)
    return np.where(mask, scale / d**2, 0.0)


def pair_drift(z: np.ndarray, scale: float) -> np.ndarray:
    """``scale * sum_{j != i} 1 / (z_i - z_j)`` for every ``i``."""
    z = np.ascontiguousarray(z, dtype=float)
    return _pair_drift_jit(z, scale) if HAS_NUMBA else _pair_drift_np(z, scale)


def masked_drift(z_short, z_long, short, far, scale: float) -> np.ndarray:
    """Interaction sum taken on ``z_short`` over ``short`` pairs and on ``z_long`` over ``far`` pairs."""
    args = (np.ascontiguousarray(z_short, dtype=float), np.ascontiguousarray(z_long, dtype=float),
            np.ascontiguousarray(short, dtype=np.bool_), np.ascontiguousarray(far, dtype=np.bool_),
            float(scale))
    return _masked_drift_jit(*args) if HAS_NUMBA else _masked_drift_np(*args)


def laplacian_apply(z, mask, f, scale: float) -> np.ndarray:
    """``sum_j -scale (f_i - f_j) / (z_i - z_j)^2`` over ``mask`` pairs."""
    args = (np.ascontiguousarray(z, dtype=float), np.ascontiguousarray(mask, dtype=np.bool_),
            np.ascontiguousarray(f, dtype=float), float(scale))
    return _laplacian_apply_jit(*args) if HAS_NUMBA else _laplacian_apply_np(*args)


def coupling_matrix(z, mask, scale: float) -> np.ndarray:
    """Dense matrix of positive rates ``scale / (z_i - z_j)^2`` on ``mask`` pairs."""
    return _coupling_np(np.asarray(z, dtype=float), np.asarray(mask, dtype=bool), scale)
