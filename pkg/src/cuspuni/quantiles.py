"""Quantiles, semiquantiles, fluctuation scales and interpolating densities."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .density import DensityProfile
from .errors import DomainError, KindMismatch, NonConvergence, NonInvertible, OutOfRange


class Mode(str, Enum):
    QUANTILE = "quantile"
    SEMIQUANTILE = "semiquantile"


class InterpMode(str, Enum):
    GAP = "gap"
    MIN = "min"


def counting(rho: DensityProfile, base: float, E):
    """Signed mass ``int_base^{base+E} rho``."""
    E = np.asarray(E, dtype=float)
    out = rho.mass_between(base, base + np.atleast_1d(E))
    return out.reshape(E.shape) if E.ndim else float(out[0])


def _mass_limits(rho: DensityProfile, base: float):
    lo, hi = rho.hull
    m = rho.mass_between(base, np.array([lo, hi]))
    return float(m[0]), float(m[1])


def bracketed_newton(residual, a, b, x, done, max_iter: int = 300):
    """Vectorized safeguarded Newton for monotone increasing residuals.

    ``residual(x, idx)`` returns ``(f, slope)`` for the active entries ``idx``.
    Newton is used only while it stays inside the bracket and halves ``|f|``;
    otherwise the bracket is bisected, so termination at ulp level is guaranteed.
    """
    a, b, x, done = a.copy(), b.copy(), x.copy(), done.copy()
    prev = np.full(x.shape, np.inf)
    for _ in range(max_iter):
        act = np.nonzero(~done)[0]
        if act.size == 0:
            return x
        xa = x[act]
        f, slope = residual(xa, act)
        aa = np.where(f < 0, xa, a[act])
        bb = np.where(f > 0, xa, b[act])
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - f / slope
        use = ((slope > 0) & np.isfinite(newton) & (newton > aa) & (newton < bb)
               & (np.abs(f) < 0.5 * prev[act]))
        nx = np.where(use, newton, 0.5 * (aa + bb))
        conv = ((f == 0) | (np.abs(nx - xa) <= 4e-16 * np.abs(nx))
                | (bb - aa <= 8e-16 * np.maximum(np.abs(aa), np.abs(bb))))
        a[act], b[act], x[act] = aa, bb, nx
        prev[act] = np.abs(f)
        done[act[conv]] = True
    raise NonConvergence("bracketed Newton did not converge")


def _tabulated_inverse(rho: DensityProfile, base: float, s):
    """Exact inverse of the piecewise-quadratic counting function of a linear interpolant."""
    g, r = rho.grid, rho.rho
    cache = rho.__dict__.setdefault("_node_mass", {})
    if base not in cache:
        cache[base] = rho.mass_between(base, g)
    M = cache[base]
    k = np.clip(np.searchsorted(M, s, side="right") - 1, 0, g.size - 2)
    m = s - M[k]
    h = g[k + 1] - g[k]
    sig = (r[k + 1] - r[k]) / h
    disc = np.maximum(r[k] ** 2 + 2.0 * sig * m, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(m == 0, 0.0, 2.0 * m / (r[k] + np.sqrt(disc)))
    u = np.clip(np.nan_to_num(u, nan=0.0, posinf=h, neginf=0.0), 0.0, h)
    return g[k] + u - base


def solve_mass(rho: DensityProfile, base: float, s):
    """Offsets ``E`` with ``counting(rho, base, E) = s``, elementwise; ``s = 0`` maps to 0.

    Tabulated profiles are inverted in closed form, exact profiles by safeguarded Newton.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lo, hi = rho.hull
    m_lo, m_hi = _mass_limits(rho, base)
    if np.any(s > m_hi) or np.any(s < m_lo):
        raise OutOfRange("requested mass exceeds the profile window")
    if not rho.has_exact_density:
        out = _tabulated_inverse(rho, base, s)
        out[s == 0] = 0.0
        return out
    a = np.where(s > 0, 0.0, lo - base)
    b = np.where(s > 0, hi - base, 0.0)
    x = np.where(s > 0, 0.5 * b, np.where(s < 0, 0.5 * a, 0.0))

    def residual(xa, idx):
        f = rho.mass_between(base, base + xa) - s[idx]
        return f, np.asarray(rho.density(base + xa), dtype=float)

    return bracketed_newton(residual, a, b, x, s == 0)


def _target_mass(i, N, mode):
    i = np.asarray(i)
    if mode == Mode.QUANTILE:
        return i / N
    if np.any(i == 0):
        raise DomainError("semiquantiles are not defined for i = 0")
    return np.where(i > 0, (i - 0.5) / N, (i + 0.5) / N)


def quantile(rho: DensityProfile, base: float, i, N: int, mode: Mode | str = Mode.QUANTILE):
    """Offset from ``base`` of the (semi)quantile(s) with index ``i``."""
    mode = Mode(mode)
    i_arr = np.asarray(i)
    out = solve_mass(rho, base, _target_mass(i_arr, N, mode))
    return out.reshape(i_arr.shape) if i_arr.ndim else float(out[0])


@dataclass(frozen=True)
class QuantileSet:
    base_point: float
    indices: np.ndarray
    gamma_hat: np.ndarray
    gamma_star: np.ndarray
    N: int


def quantile_set(rho: DensityProfile, base: float, N: int, imax: int, imin: int | None = None) -> QuantileSet:
    """Quantiles and semiquantiles for ``i`` in ``[imin, imax]`` without 0."""
    imin = -imax if imin is None else imin
    idx = np.array([i for i in range(imin, imax + 1) if i != 0])
    gh = quantile(rho, base, idx, N, Mode.QUANTILE)
    gs = quantile(rho, base, idx, N, Mode.SEMIQUANTILE)
    return QuantileSet(float(base), idx, gh, gs, N)


@dataclass(frozen=True)
class FluctuationScale:
    tau: float
    eta_f: float


def _snap_to_support(rho: DensityProfile, tau: float) -> float:
    if not rho.support:
        return tau
    for a, b in rho.support:
        if a <= tau <= b:
            return tau
    edges = np.array([e for iv in rho.support for e in iv])
    d = np.abs(edges - tau)
    k = np.flatnonzero(d == d.min())
    return float(edges[k].min())  # ties go to the left edge


def fluctuation_scale(rho: DensityProfile, tau: float, N: int, max_iter: int = 200) -> FluctuationScale:
    """Half-width ``eta`` with ``int_{tau-eta}^{tau+eta} rho = 1/N``."""
    lo, hi = rho.hull
    if not lo <= tau <= hi:
        raise OutOfRange("tau outside the profile hull")
    c = _snap_to_support(rho, float(tau))
    target = 1.0 / N
    top = min(c - lo, hi - c)

    def mass(eta):
        m = rho.mass_between(c, np.array([c - eta, c + eta]))
        return float(m[1] - m[0])

    if mass(top) < target:
        raise OutOfRange("window holds less than 1/N around tau")
    a, b = 0.0, top
    eta = min(target / max(2 * float(rho.density(np.array([c]))[0]), 1e-300), 0.5 * top)
    for _ in range(max_iter):
        f = mass(eta) - target
        if f < 0:
            a = eta
        else:
            b = eta
        r = float(np.sum(rho.density(np.array([c - eta, c + eta]))))
        nxt = eta - f / r if r > 0 else 0.5 * (a + b)
        if not a < nxt < b:
            nxt = 0.5 * (a + b)
        if abs(nxt - eta) <= 1e-15 * max(eta, 1e-300) or b - a <= 1e-16 * (hi - lo):
            return FluctuationScale(float(tau), float(nxt))
        eta = nxt
    raise NonConvergence("fluctuation scale did not converge")


# ---------------------------------------------------------------------------
# interpolation


@dataclass
class InterpolatingDensity:
    """Density whose quantile function is the convex combination of two others.

    Positions are ``base + phi(s)`` where ``s`` is the signed mass from ``base``.
    """

    alpha: float
    mode: InterpMode
    base: float
    edges: tuple
    s_range: tuple
    _x: tuple
    _y: tuple
    rho_alpha: DensityProfile | None = None

    def quantile_x(self, s):
        return solve_mass(self._x[0], self._x[1], s)

    def quantile_y(self, s):
        return solve_mass(self._y[0], self._y[1], s)

    def phi_alpha(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        a = self.alpha
        qx = self.quantile_x(s) if a > 0 else 0.0
        qy = self.quantile_y(s) if a < 1 else 0.0
        return a * qx + (1 - a) * qy

    def _rho_parts(self, s):
        rx = self._x[0].density(self._x[1] + self.quantile_x(s)) if self.alpha > 0 else None
        ry = self._y[0].density(self._y[1] + self.quantile_y(s)) if self.alpha < 1 else None
        return rx, ry

    def density_at_mass(self, s):
        """Harmonic combination of the two densities at equal mass ``s``."""
        a = self.alpha
        rx, ry = self._rho_parts(s)
        if a == 1:
            return np.asarray(rx, dtype=float)
        if a == 0:
            return np.asarray(ry, dtype=float)
        with np.errstate(divide="ignore"):
            inv = a / rx + (1 - a) / ry
        return np.where(np.isfinite(inv), 1.0 / inv, 0.0)

    def n_alpha(self, x):
        """Signed mass from the base to ``base + x`` (inverse of ``phi_alpha``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s_lo, s_hi = self.s_range
        lo, hi = self.phi_alpha(np.array([s_lo, s_hi]))
        if np.any(x < lo - 1e-15) or np.any(x > hi + 1e-15):
            raise OutOfRange("point outside the interpolation window")
        g_lo = self.edges[0] - self.base if self.mode == InterpMode.GAP else 0.0
        a = np.where(x > 0, 0.0, s_lo)
        b = np.where(x > 0, s_hi, 0.0)
        s0 = np.where(x > 0, 0.5 * b, 0.5 * a)
        done = (x == 0) | ((x <= 0) & (x >= g_lo))  # inside the gap
        s0[done] = 0.0

        def residual(sa, idx):
            return self.phi_alpha(sa) - x[idx], 1.0 / self.density_at_mass(sa)

        with np.errstate(divide="ignore"):
            return bracketed_newton(residual, a, b, s0, done)

    def density(self, E):
        """Interpolating density at absolute positions ``E``."""
        E = np.asarray(E, dtype=float)
        x = np.atleast_1d(E) - self.base
        s = self.n_alpha(x)
        out = self.density_at_mass(s)
        if self.mode == InterpMode.GAP:
            g_lo = self.edges[0] - self.base
            out = np.where((x < 0) & (x > g_lo), 0.0, out)
        return out.reshape(E.shape) if E.ndim else float(out[0])


def _gap_left_edge(rho: DensityProfile, e_plus: float) -> float:
    left = [b for a, b in rho.support if b < e_plus]
    if not left:
        raise KindMismatch("gap mode requires a support interval left of the base edge")
    return max(left)


def interpolate(rho_x: DensityProfile, rho_y: DensityProfile, alpha: float, mode: InterpMode | str,
                base_x: float, base_y: float,
                tabulate: bool = True) -> InterpolatingDensity:
    """Interpolating density between two near-cusp densities at matched mass.

    ``base_*`` are the right gap edges (gap mode) or the minimum locations (min mode).
    With ``tabulate`` the inputs are replaced by their piecewise-linear interpolants,
    which keeps every nested root solve cheap.
    """
    mode = InterpMode(mode)
    if tabulate:
        rho_x, rho_y = rho_x.tabulated(), rho_y.tabulated()
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    if mode == InterpMode.GAP:
        ex_m, ey_m = _gap_left_edge(rho_x, base_x), _gap_left_edge(rho_y, base_y)
    else:
        for r, b in ((rho_x, base_x), (rho_y, base_y)):
            if float(r.density(np.array([b]))[0]) <= 0:
                raise KindMismatch("min mode requires a positive density at the base")
    lx, hx = _mass_limits(rho_x, base_x)
    ly, hy = _mass_limits(rho_y, base_y)
    s_lo, s_hi = max(lx, ly), min(hx, hy)
    base = alpha * base_x + (1 - alpha) * base_y
    if mode == InterpMode.GAP:
        edges = (alpha * ex_m + (1 - alpha) * ey_m, base)
    else:
        edges = (base,)
    interp = InterpolatingDensity(alpha, mode, base, edges, (s_lo, s_hi),
                                  (rho_x, base_x), (rho_y, base_y))
    # union of both mass grids, so every kink of rho_alpha sits on a grid node
    sx = rho_x.mass_between(base_x, rho_x.grid)
    sy = rho_y.mass_between(base_y, rho_y.grid)
    s = np.unique(np.concatenate([sx, sy, [0.0]]))
    s = s[(s >= s_lo) & (s <= s_hi)]
    phi = interp.phi_alpha(s)
    if np.any(np.diff(phi) < 0):
        raise NonInvertible("phi_alpha is not monotone on the window")
    keep = np.unique(phi, return_index=True)[1]
    s, phi = s[keep], phi[keep]
    rho = interp.density_at_mass(s)
    grid = base + phi
    if mode == InterpMode.GAP:
        g = edges[0]
        grid, first = np.unique(np.concatenate([[g], grid]), return_index=True)
        rho = np.concatenate([[0.0], rho])[first]
        support = [(float(grid[0]), g), (base, float(grid[-1]))]
    else:
        support = [(float(grid[0]), float(grid[-1]))]
    interp.rho_alpha = DensityProfile(grid, rho, density=interp.density, support=support)
    return interp


def local_spacing(points):
    """Distance from each point to its nearest neighbour in the set."""
    p = np.asarray(points, dtype=float)
    order = np.argsort(p)
    q = p[order]
    gaps = np.diff(q)
    near = np.minimum(np.concatenate([[np.inf], gaps]), np.concatenate([gaps, [np.inf]]))
    out = np.empty_like(near)
    out[order] = near
    return out


def interpolation_error(interp: InterpolatingDensity, N: int, imax: int) -> float:
    """Max over ``0 < |i| <= imax`` of the convexity defect of the quantiles in local spacing units."""
    idx = np.array([i for i in range(-imax, imax + 1) if i != 0])
    comb = interp.phi_alpha(idx / N)
    direct = quantile(interp.rho_alpha, interp.base, idx, N)
    spacing = local_spacing(np.concatenate([comb, [0.0]]))[:-1]
    return float(np.max(np.abs(direct - comb) / spacing))
