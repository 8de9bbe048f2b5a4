"""Vector Dyson equation solver and self-consistent densities of states.

The equation solved is ``-1/m_i = z - a_i + (S m)_i`` on the upper half-plane.
Rows sharing the same expectation and variance row are collapsed, so a flat
variance profile with a handful of distinct diagonal values costs O(#values)
per iteration regardless of N.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import (BoundViolation, InvalidSpec, NonConvergence, OutOfRange,
                     SingularEvaluation)

DEFAULT_TOL = 1e-12
EDGE_THRESHOLD = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_x16, _w16 = np.polynomial.legendre.leggauss(16)
_u = 0.5 * (_x16 + 1.0)
# smootherstep-graded nodes on [0, 1] for panel integrals
_SMOOTH_X = _u**3 * (10 - 15 * _u + 6 * _u**2)
_SMOOTH_W = 0.5 * _w16 * 30 * _u**2 * (1 - _u) ** 2
del _x16, _w16, _u


@dataclass(frozen=True)
class Flat:
    """Flat variance profile ``s_ij = c / N``."""

    c: float


@dataclass(frozen=True)
class Full:
    """Explicit N x N variance matrix."""

    matrix: np.ndarray


@dataclass(frozen=True)
class EnsembleSpec:
    """Deformed Wigner-type ensemble: expectation diagonal ``a``, variances, symmetry class."""

    a: np.ndarray
    variance_profile: Flat | Full
    beta: int = 1
    flatness: float = 1e-8
    a_bound: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).ravel())

    @property
    def N(self) -> int:
        return int(self.a.size)

    def validate(self) -> None:
        if self.N < 1:
            raise InvalidSpec("empty expectation vector")
        if self.beta not in (1, 2):
            raise InvalidSpec(f"beta must be 1 or 2, got {self.beta}")
        if not np.all(np.isfinite(self.a)) or np.max(np.abs(self.a)) > self.a_bound:
            raise InvalidSpec("expectation entries exceed the configured bound")
        vp = self.variance_profile
        if isinstance(vp, Flat):
            if not np.isfinite(vp.c) or vp.c < self.flatness:
                raise InvalidSpec(f"flat variance c={vp.c} violates flatness")
        elif isinstance(vp, Full):
            S = np.asarray(vp.matrix, dtype=float)
            if S.shape != (self.N, self.N):
                raise InvalidSpec(f"variance matrix has shape {S.shape}, expected {(self.N, self.N)}")
            if not np.allclose(S, S.T, rtol=1e-12, atol=0):
                raise InvalidSpec("variance matrix is not symmetric")
            if S.min() * self.N < self.flatness:
                raise InvalidSpec("variance matrix violates flatness")
        else:
            raise InvalidSpec(f"unknown variance profile {vp!r}")

    def variance_matrix(self) -> np.ndarray:
        vp = self.variance_profile
        if isinstance(vp, Flat):
            return np.full((self.N, self.N), vp.c / self.N)
        return np.asarray(vp.matrix, dtype=float)


@dataclass(frozen=True)
class GreenVector:
    z: complex
    m: np.ndarray
    residual: float

    @property
    def mean(self) -> complex:
        return complex(np.mean(self.m))


@dataclass(frozen=True)
class _Reduced:
    a: np.ndarray        # (K,) distinct rows
    w: np.ndarray        # (K,) row weights, sum to 1
    S: np.ndarray        # (K, K) reduced variance action
    groups: np.ndarray   # (N,) row -> reduced index


def _reduce(spec: EnsembleSpec) -> _Reduced:
    vp = spec.variance_profile
    N = spec.N
    if isinstance(vp, Flat):
        vals, inv, counts = np.unique(spec.a, return_inverse=True, return_counts=True)
        w = counts / N
        S = vp.c * np.outer(np.ones_like(w), w)
        return _Reduced(vals, w, S, inv.ravel())
    S = np.asarray(vp.matrix, dtype=float)
    return _Reduced(spec.a.copy(), np.full(N, 1.0 / N), S.copy(), np.arange(N))


def richardson_zero(etas: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Polynomial extrapolation of ``values[k] ~ f(etas[k])`` to ``eta = 0``.

    ``values`` has the ladder along its first axis.
    """
    etas = np.asarray(etas, dtype=float)
    w = np.ones_like(etas)
    for k in range(etas.size):
        for j in range(etas.size):
            if j != k:
                w[k] *= etas[j] / (etas[j] - etas[k])
    return np.tensordot(w, values, axes=(0, 0))


class DysonSolver:
    """Batched solver for the vector Dyson equation of one ensemble.

    The solver doubles as a Stieltjes evaluator: calling it returns the
    averaged solution ``<m>(z)``.
    """

    def __init__(self, spec: EnsembleSpec, tol: float = DEFAULT_TOL, max_iter: int = 4000,
                 damping: float = 0.5, newton_switch: float = 1e-3, bound: float | None = None,
                 eta_top: float = 1.0):
        spec.validate()
        self.spec = spec
        self.red = _reduce(spec)
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping
        self.newton_switch = newton_switch
        self.bound = bound
        self.eta_top = eta_top
        self.total_mass = 1.0

    # core iteration -----------------------------------------------------
    def _defect(self, m, z):
        r = self.red
        return 1.0 / m + z[:, None] - r.a[None, :] + m @ r.S.T

    def _iterate(self, z, m, max_iter):
        """Damped fixed point, switching to Newton once the defect is small."""
        r = self.red
        K = r.a.size
        th = self.damping
        F = self._defect(m, z)
        d = np.max(np.abs(F), axis=1)
        eye = np.eye(K)
        for _ in range(max_iter):
            act = d > self.tol
            if not act.any():
                break
            idx = np.nonzero(act)[0]
            ma, za, Fa, da = m[idx], z[idx], F[idx], d[idx]
            fp = (1 - th) * ma + th * (-1.0 / (za[:, None] - r.a[None, :] + ma @ r.S.T))
            new = fp
            nwt = da < self.newton_switch
            if nwt.any():
                mn = ma[nwt]
                J = r.S[None, :, :] - eye[None, :, :] / (mn * mn)[:, :, None]
                try:
                    step = np.linalg.solve(J, -Fa[nwt][:, :, None])[:, :, 0]
                except np.linalg.LinAlgError:
                    step = np.zeros_like(mn)
                cand = mn + step
                Fc = self._defect(cand, za[nwt])
                dc = np.max(np.abs(Fc), axis=1)
                # near a cusp the first Newton step may raise a tiny defect before converging
                ok = (((dc < da[nwt]) | (dc < 0.1 * self.newton_switch))
                      & np.all(cand.imag > 0, axis=1) & np.all(np.isfinite(cand), axis=1))
                sub = new[nwt]
                sub[ok] = cand[ok]
                new[nwt] = sub
            m[idx] = new
            F[idx] = self._defect(new, za)
            d[idx] = np.max(np.abs(F[idx]), axis=1)
        return m, d

    def _solve_from(self, z, m0, max_iter=None):
        m = np.array(m0, dtype=complex, copy=True)
        return self._iterate(z, m, self.max_iter if max_iter is None else max_iter)

    def _continuation(self, z, m0=None):
        """Solve along a geometric path in Im z from ``eta_top`` down to the target."""
        z = np.asarray(z, dtype=complex)
        K = self.red.a.size
        target = z.imag
        eta = np.maximum(target, self.eta_top)
        m = np.full((z.size, K), 1j) if m0 is None else np.array(m0, dtype=complex)
        m, d = self._solve_from(z.real + 1j * eta, m)
        if np.any(d > self.tol):
            raise NonConvergence("Dyson iteration failed at the top of the continuation path")
        ratio = np.full(z.size, 0.25)
        while True:
            todo = eta > target
            if not todo.any():
                break
            idx = np.nonzero(todo)[0]
            new_eta = np.maximum(eta[idx] * ratio[idx], target[idx])
            m_idx, d_idx = self._solve_from(z.real[idx] + 1j * new_eta, m[idx], max_iter=60)
            ok = (d_idx <= self.tol) & np.all(m_idx.imag > 0, axis=1)
            # accepted points advance and lengthen their step; the rest retry a shorter one
            m[idx[ok]] = m_idx[ok]
            eta[idx[ok]] = new_eta[ok]
            ratio[idx[ok]] = np.maximum(ratio[idx[ok]] ** 2, 0.25)
            ratio[idx[~ok]] = np.sqrt(ratio[idx[~ok]])
            if np.any(ratio > 1 - 1e-6):
                raise NonConvergence("Dyson continuation stalled near the real axis")
        return m

    def _finish(self, z, m):
        F = self._defect(m, z)
        res = np.max(np.abs(F), axis=1)
        if np.any(res > self.tol) or np.any(m.imag <= 0):
            raise NonConvergence("Dyson solution failed the residual or Herglotz check")
        if self.bound is not None and np.max(np.abs(m)) > self.bound:
            raise BoundViolation(f"|m| exceeded bound {self.bound}")
        return res

    # public API ---------------------------------------------------------
    def solve_reduced(self, z, m0=None):
        """Return ``(m_reduced, residual)`` for an array of spectral parameters."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if np.any(z.imag <= 0):
            raise ValueError("spectral parameter must satisfy Im z > 0")
        if m0 is not None:
            m, d = self._solve_from(z, m0, max_iter=200)
            if np.any(d > self.tol):
                bad = d > self.tol
                m[bad] = self._continuation(z[bad])
        else:
            m = self._continuation(z)
        res = self._finish(z, m)
        return m, res

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        m, _ = self.solve_reduced(z.ravel())
        return (m @ self.red.w).reshape(z.shape)

    def derivative_reduced(self, z, m):
        r = self.red
        K = r.a.size
        J = r.S[None, :, :] - np.eye(K)[None, :, :] / (m * m)[:, :, None]
        dm = np.linalg.solve(J, -np.ones((z.size, K, 1), dtype=complex))[:, :, 0]
        return dm @ r.w

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        zf = z.ravel()
        m, _ = self.solve_reduced(zf)
        return self.derivative_reduced(zf, m).reshape(z.shape)

    def evaluate(self, z, state=None):
        """Warm-startable evaluation used by the free convolution solver."""
        m, _ = self.solve_reduced(z, m0=state)
        return m @ self.red.w, self.derivative_reduced(np.asarray(z, dtype=complex), m), m

    def expand(self, m_reduced):
        return m_reduced[..., self.red.groups]

    def density(self, E, eta_min: float = 1e-8, levels: int = 4):
        """Density on the real axis from an eta ladder with Richardson extrapolation."""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        shape = E.shape
        E = E.ravel()
        etas = eta_min * 2.0 ** np.arange(levels - 1, -1, -1)
        m = self._continuation(E + 1j * etas[0])
        vals = [m @ self.red.w]
        for eta in etas[1:]:
            m, d = self._solve_from(E + 1j * eta, m)
            if np.any(d > self.tol):
                raise NonConvergence("Dyson ladder failed to converge")
            vals.append(m @ self.red.w)
        im0 = richardson_zero(etas, np.array(vals).imag)
        return np.maximum(im0, 0.0).reshape(shape) / np.pi


def solve_dyson(spec: EnsembleSpec, z: complex, tol: float = DEFAULT_TOL, **kw) -> GreenVector:
    """Solve the Dyson equation at a single spectral parameter."""
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("spectral parameter must satisfy Im z > 0")
    solver = DysonSolver(spec, tol=tol, **kw)
    m, res = solver.solve_reduced(np.array([z]))
    return GreenVector(z, solver.expand(m[0]), float(res[0]))


# ---------------------------------------------------------------------------
# density profiles


class DensityProfile:
    """Sampled density on a strictly increasing grid plus a Stieltjes evaluator.

    ``density`` is an optional exact evaluator; without it the piecewise-linear
    interpolant of the samples is used.
    """

    def __init__(self, grid, rho, stieltjes: Callable | None = None, density: Callable | None = None,
                 support: Sequence[tuple[float, float]] = (), atoms: Sequence[tuple[float, float]] = (),
                 total_mass: float | None = None):
        self.grid = np.asarray(grid, dtype=float)
        self.rho = np.asarray(rho, dtype=float)
        if self.grid.ndim != 1 or self.grid.size != self.rho.size:
            raise ValueError("grid and rho must be 1-d arrays of equal length")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.rho < 0):
            raise ValueError("density must be nonnegative")
        self.atoms = tuple((float(x), float(w)) for x, w in atoms)
        self.support = tuple((float(a), float(b)) for a, b in support)
        self._density = density
        self.stieltjes = stieltjes if stieltjes is not None else (lambda z: stieltjes_of_profile(self, z))
        trap = float(np.trapezoid(self.rho, self.grid)) if self.grid.size > 1 else 0.0
        self.total_mass = trap + sum(w for _, w in self.atoms) if total_mass is None else float(total_mass)

    @property
    def hull(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self._density is not None:
            return np.asarray(self._density(x), dtype=float)
        return np.interp(x, self.grid, self.rho, left=0.0, right=0.0)

    def tabulated(self) -> "DensityProfile":
        """Copy that evaluates the density by linear interpolation of the samples."""
        return DensityProfile(self.grid, self.rho, stieltjes=self.stieltjes, support=self.support,
                              atoms=self.atoms, total_mass=self.total_mass)

    @property
    def has_exact_density(self) -> bool:
        return self._density is not None

    def _integrate(self, a, b):
        """Integral of the density over ``[a, b]`` (elementwise), one graded panel each.

        The smootherstep map ``x = a + (b - a) s^3 (10 - 15 s + 6 s^2)`` flattens
        square-root and cube-root endpoint behaviour so 16 Gauss nodes suffice.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        h = b - a
        nodes = a[..., None] + h[..., None] * _SMOOTH_X[None, :]
        vals = self.density(nodes.reshape(-1)).reshape(nodes.shape)
        return h * (vals @ _SMOOTH_W)

    @cached_property
    def _panels(self):
        return self._integrate(self.grid[:-1], self.grid[1:])

    @cached_property
    def _cumulative_table(self):
        return np.concatenate([[0.0], np.cumsum(self._panels)])

    def _check_hull(self, x):
        lo, hi = self.hull
        slack = 1e-14 * max(1.0, abs(lo), abs(hi))
        if np.any(x < lo - slack) or np.any(x > hi + slack):
            raise OutOfRange("point outside the profile grid hull")
        return np.clip(x, lo, hi)

    def _node_below(self, x):
        return np.clip(np.searchsorted(self.grid, x, side="right") - 1, 0, self.grid.size - 2)

    def cumulative(self, x):
        """Mass of the continuous part between the left end of the grid and ``x``."""
        x = self._check_hull(np.atleast_1d(np.asarray(x, dtype=float)))
        k = self._node_below(x)
        return self._cumulative_table[k] + self._integrate(self.grid[k], x)

    def mass_between(self, base: float, x):
        """Signed mass from ``base`` to ``x`` without cancellation against the total."""
        base = float(self._check_hull(np.array([base]))[0])
        x = self._check_hull(np.atleast_1d(np.asarray(x, dtype=float)))
        kb = int(self._node_below(np.array([base]))[0])
        anchored = self._anchored(kb)
        k = self._node_below(x)
        head = float(self._integrate(np.array([self.grid[kb]]), np.array([base]))[0])
        return anchored[k] + self._integrate(self.grid[k], x) - head

    def _anchored(self, kb: int):
        cache = self.__dict__.setdefault("_anchor_cache", {})
        if kb not in cache:
            p = self._panels
            right = np.concatenate([[0.0], np.cumsum(p[kb:])])
            left = -np.cumsum(p[:kb][::-1])[::-1]
            cache[kb] = np.concatenate([left, right])
        return cache[kb]

    def edges(self) -> list[float]:
        return sorted({e for iv in self.support for e in iv
                       if self.grid[0] < e < self.grid[-1]})


def _ksection(fn, lo, hi, f_lo, predicate, xtol, points=33, max_rounds=60):
    """Shrink ``[lo, hi]`` around the point where ``predicate(fn)`` flips.

    ``predicate`` is evaluated on a batch of interior points each round.
    """
    for _ in range(max_rounds):
        if hi - lo <= xtol:
            break
        xs = np.linspace(lo, hi, points)
        flags = predicate(fn(xs))
        first = flags[0]
        change = np.nonzero(flags != first)[0]
        if change.size == 0:
            break
        k = change[0]
        lo, hi = xs[k - 1], xs[k]
    return lo, hi


def locate_edges(density_fn, grid, rho, threshold=EDGE_THRESHOLD, xtol=1e-12):
    """Refine every threshold crossing found on ``grid`` by batched k-section."""
    pos = rho > threshold
    edges = []
    for k in np.nonzero(pos[1:] != pos[:-1])[0]:
        lo, hi = _ksection(density_fn, grid[k], grid[k + 1], rho[k], lambda v: v > threshold, xtol)
        edges.append((0.5 * (lo + hi), bool(pos[k + 1])))  # (location, support starts here)
    return edges


def sample_profile(density_fn, window, resolution, stieltjes=None, rtol=2e-5, area_tol=2e-10,
                   n0=129, max_points=40000, threshold=EDGE_THRESHOLD) -> DensityProfile:
    """Adaptive sampling of a vectorized density into a :class:`DensityProfile`."""
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValueError("window must be a nonempty interval")
    grid = np.linspace(lo, hi, n0)
    rho = np.asarray(density_fn(grid), dtype=float)
    scale = max(float(rho.max()), 1e-300)
    for _ in range(200):
        left, right = grid[:-1], grid[1:]
        wide = (right - left) > resolution
        if not wide.any():
            break
        mids = 0.5 * (left[wide] + right[wide])
        rmid = np.asarray(density_fn(mids), dtype=float)
        lin = 0.5 * (rho[:-1][wide] + rho[1:][wide])
        dev = np.abs(rmid - lin)
        bad = (dev > rtol * scale) | (dev * (right[wide] - left[wide]) > area_tol * scale)
        scale = max(scale, float(rmid.max(initial=0.0)))
        if not bad.any():
            break
        grid = np.concatenate([grid, mids[bad]])
        rho = np.concatenate([rho, rmid[bad]])
        order = np.argsort(grid)
        grid, rho = grid[order], rho[order]
        if grid.size > max_points:
            break
    edges = locate_edges(density_fn, grid, rho, threshold, xtol=max(resolution * 1e-3, 1e-15))
    if edges:
        ex = np.array([e for e, _ in edges])
        ex = ex[~np.isin(ex, grid)]
        grid = np.concatenate([grid, ex])
        rho = np.concatenate([rho, np.asarray(density_fn(ex), dtype=float)])
        order = np.argsort(grid)
        grid, rho = grid[order], rho[order]
    support = []
    start = lo if rho[0] > threshold else None
    for x, opens in edges:
        if opens:
            start = x
        elif start is not None:
            support.append((start, x))
            start = None
    if start is not None:
        support.append((start, hi))
    return DensityProfile(grid, rho, stieltjes=stieltjes, density=density_fn, support=support)


def scdos(spec: EnsembleSpec, window, resolution: float = 1e-6, **solver_kw) -> DensityProfile:
    """Self-consistent density of states of ``spec`` sampled on ``window``."""
    solver = DysonSolver(spec, **solver_kw)
    eta_min = resolution / 10.0

    def rho(E):
        return solver.density(E, eta_min=eta_min)

    return sample_profile(rho, window, resolution, stieltjes=solver)


# ---------------------------------------------------------------------------
# Stieltjes transform of tabulated profiles


def _segment_integrals(x0, x1, r0, r1, z, pv):
    """Exact integral of the linear interpolant over ``[x0, x1]`` against ``1/(x - z)``."""
    h = x1 - x0
    s = (r1 - r0) / h
    a = x0 - z
    b = x1 - z
    if pv:
        L = np.log(np.abs(b) / np.abs(a)).astype(complex)
    else:
        L = np.log(b / a)
    return s * h + (r0 + s * (z - x0)) * L


def stieltjes_of_profile(profile: DensityProfile, z, pv: bool = False):
    """``int rho(x) / (x - z) dx`` for the tabulated profile plus its atoms.

    For real ``z`` inside the support ``pv=True`` returns the boundary value
    ``PV + i pi rho(z)``.
    """
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(zs.shape, dtype=complex)
    g, r = profile.grid, profile.rho
    x0, x1, r0, r1 = g[:-1], g[1:], r[:-1], r[1:]
    h = x1 - x0
    mid = 0.5 * (x0 + x1)
    for n, zz in enumerate(zs):
        total = 0j
        real = zz.imag == 0
        if real:
            rz = float(np.interp(zz.real, g, r, left=0.0, right=0.0))
            if rz > 0 and not pv:
                raise SingularEvaluation("real z inside the support requires pv=True")
        far = np.abs(mid - zz) > 2.0 * h
        if far.any():
            nodes = mid[far, None] + 0.5 * h[far, None] * _GL_NODES[None, :]
            vals = r0[far, None] + (r1 - r0)[far, None] * (0.5 * (_GL_NODES[None, :] + 1.0))
            total += np.sum(0.5 * h[far] * ((vals / (nodes - zz)) @ _GL_WEIGHTS))
        near = ~far
        if near.any():
            total += np.sum(_segment_integrals(x0[near], x1[near], r0[near], r1[near], zz, pv=real))
        if real and pv:
            total += 1j * np.pi * rz
        for xa, wa in profile.atoms:
            total += wa / (xa - zz)
        out[n] = total
    return out.reshape(np.shape(z)) if np.ndim(z) else complex(out[0])


def point_mass_profile(x0: float = 0.0, weight: float = 1.0, half_width: float = 1.0) -> DensityProfile:
    """Profile carrying a single atom; its Stieltjes transform is exact."""
    grid = np.array([x0 - half_width, x0 + half_width])
    prof = DensityProfile(grid, np.zeros(2), atoms=[(x0, weight)])
    prof.stieltjes = lambda z: weight / (x0 - np.asarray(z, dtype=complex))
    return prof
