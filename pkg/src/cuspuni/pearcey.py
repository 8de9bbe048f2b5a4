"""Extended Pearcey kernel by double contour quadrature, and its k-point functions.

Contours: ``w`` runs up the vertical line ``Re w = sigma``. The ``z`` contour
is two wedges: one from ``inf e^{5i pi/4}`` through 0 to ``inf e^{3i pi/4}``,
and one from ``inf e^{i pi/4}`` through ``2 sigma`` to ``2 sigma + inf e^{-i pi/4}``.
The line separates the wedges, so the integrand is never singular and the
value does not depend on ``sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import HullViolation, NoConvergence

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(64)
DECAY_EXPONENT = 37.0  # e^-37 ~ 1e-16
MAX_RADIUS = 12.0


@dataclass(frozen=True)
class ContourSpec:
    radius: float
    nodes_per_ray: int
    shift: float

    def __post_init__(self):
        if not self.shift > 0:
            raise ValueError("shift must be positive")
        if not self.shift < self.radius / 10:
            raise HullViolation("shift must stay below a tenth of the radius")


@dataclass(frozen=True)
class KernelValue:
    alpha: float
    beta: float
    x: float
    y: float
    value: complex
    est_error: float


def truncation_radius(alpha_max: float, x_max: float) -> float:
    """Radius where the quartic decay beats the quadratic and linear growth by e^-37."""
    f = lambda R: R**4 / 4 - alpha_max * R**2 / 2 - x_max * R - DECAY_EXPONENT
    R = brentq(f, 1e-3, 1e3)
    if R > MAX_RADIUS:
        raise HullViolation(f"parameters need radius {R:.2f} > {MAX_RADIUS}")
    return R


def _panel_edges(length: float, sigma: float, panels: int):
    """Panel boundaries on ``[0, length]``, graded geometrically towards 0."""
    fine = sigma * 2.0 ** np.arange(-4, 3)
    fine = fine[fine < length]
    coarse = np.linspace(fine[-1] if fine.size else 0.0, length, max(panels, 2))
    edges = np.unique(np.concatenate([[0.0], fine, coarse]))
    return edges


def _refine(edges: np.ndarray, level: int):
    for _ in range(level):
        mids = 0.5 * (edges[1:] + edges[:-1])
        edges = np.sort(np.concatenate([edges, mids]))
    return edges


def _ray_nodes(edges):
    a, b = edges[:-1], edges[1:]
    r = (0.5 * (b - a)[:, None] * _NODES[None, :] + 0.5 * (a + b)[:, None]).ravel()
    wts = (0.5 * (b - a)[:, None] * _WEIGHTS[None, :]).ravel()
    return r, wts


def contour_nodes(spec: ContourSpec, level: int = 0):
    """Nodes and oriented weights ``(z, dz)`` and ``(w, dw)``."""
    R, sig = spec.radius, spec.shift
    panels = max(2, spec.nodes_per_ray // _NODES.size)
    edges = _refine(_panel_edges(R, sig, panels), level)
    r, wr = _ray_nodes(edges)
    zs, dzs = [], []
    for vertex, ang_in, ang_out in ((0.0, 5 * np.pi / 4, 3 * np.pi / 4),
                                    (2 * sig, np.pi / 4, -np.pi / 4)):
        e_in, e_out = np.exp(1j * ang_in), np.exp(1j * ang_out)
        zs += [vertex + r * e_in, vertex + r * e_out]
        dzs += [-wr * e_in, wr * e_out]  # incoming ray is traversed towards the vertex
    z, dz = np.concatenate(zs), np.concatenate(dzs)
    w = np.concatenate([sig - 1j * r[::-1], sig + 1j * r])
    dw = 1j * np.concatenate([wr[::-1], wr])
    return z, dz, w, dw


def _weights_z(z, dz, alpha, x):
    alpha = np.asarray(alpha, dtype=float)[:, None]
    x = np.asarray(x, dtype=float)[:, None]
    return dz[None, :] * np.exp(z[None, :] ** 4 / 4 - alpha * z[None, :] ** 2 / 2 + x * z[None, :])


def _weights_w(w, dw, beta, y):
    beta = np.asarray(beta, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[:, None]
    return dw[None, :] * np.exp(-w[None, :] ** 4 / 4 + beta * w[None, :] ** 2 / 2 - y * w[None, :])


def _pairs_integral(z, dz, w, dw, alpha, x, beta, y, chunk: int = 256):
    """Double integral for paired parameter arrays, without the Gaussian term."""
    A = _weights_z(z, dz, alpha, x)      # (n, nz)
    B = _weights_w(w, dw, beta, y)       # (n, nw)
    out = np.empty(A.shape[0], dtype=complex)
    for s in range(0, z.size, chunk):
        C = 1.0 / (w[None, :] - z[s:s + chunk, None])   # (chunk, nw)
        part = np.einsum("nj,nj->n", A[:, s:s + chunk], (C @ B.T).T)
        out = part if s == 0 else out + part
    return out / (2j * np.pi) ** 2


def _gaussian(alpha, beta, x, y):
    d = np.asarray(beta, dtype=float) - np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(-((np.asarray(y) - np.asarray(x)) ** 2) / (2 * d)) / np.sqrt(2 * np.pi * d)
    return np.where(d > 0, g, 0.0)


def kernel_pairs(alpha, beta, x, y, tol: float = 1e-10, shift: float = 0.1, max_level: int = 4):
    """Kernel values for broadcastable parameter arrays; returns ``(values, est_error)``."""
    alpha, beta, x, y = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float))
                                              for v in (alpha, beta, x, y)))
    shape = alpha.shape
    alpha, beta, x, y = (v.ravel() for v in (alpha, beta, x, y))
    R = truncation_radius(float(max(np.abs(alpha).max(), np.abs(beta).max())),
                          float(max(np.abs(x).max(), np.abs(y).max())))
    spec = ContourSpec(R, 4 * _NODES.size, shift)
    prev = None
    for level in range(max_level + 1):
        z, dz, w, dw = contour_nodes(spec, level)
        val = _pairs_integral(z, dz, w, dw, alpha, x, beta, y)
        if prev is not None:
            err = np.abs(val - prev)
            if np.all(err <= tol):
                val = val - _gaussian(alpha, beta, x, y)
                return val.reshape(shape), err.reshape(shape)
        prev = val
    raise NoConvergence("node doubling did not reach the requested tolerance")


def kernel(alpha: float, beta: float, x: float, y: float, tol: float = 1e-10,
           shift: float = 0.1) -> KernelValue:
    if tol < 1e-10:
        raise ValueError("tolerance below 1e-10 is not supported")
    v, e = kernel_pairs(alpha, beta, x, y, tol, shift)
    return KernelValue(alpha, beta, x, y, complex(v[0]), float(e[0]))


def density(x, alpha: float = 0.0, tol: float = 1e-10):
    """One-point function ``K_{alpha,alpha}(x, x)`` (real part) for an array of ``x``."""
    x = np.asarray(x, dtype=float)
    v, _ = kernel_pairs(alpha, alpha, x, x, tol)
    return v.real.reshape(x.shape)


def kernel_matrix(alphas, xs, tol: float = 1e-10):
    """Matrix ``K_{alpha_i, alpha_j}(x_i, x_j)``."""
    alphas = np.asarray(alphas, dtype=float)
    xs = np.asarray(xs, dtype=float)
    A, B = np.meshgrid(alphas, alphas, indexing="ij")
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    v, _ = kernel_pairs(A, B, X, Y, tol)
    return v


def kpoint(alphas, xs, tol: float = 1e-10) -> float:
    """Determinantal k-point function at ordered times."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(np.diff(alphas) < 0):
        raise ValueError("alphas must be nondecreasing")
    det = np.linalg.det(kernel_matrix(alphas, xs, tol))
    scale = max(1.0, abs(det))
    if abs(det.imag) > 1e-6 * scale:
        raise NoConvergence(f"determinant has imaginary part {det.imag:.3g}")
    return float(det.real)


def shift_invariance_check(alpha, beta, x, y, sigmas, tol: float = 1e-10) -> float:
    vals = [kernel_pairs(alpha, beta, x, y, tol, shift=s)[0][0] for s in sigmas]
    return float(max((abs(a - b) for a in vals for b in vals), default=0.0))
