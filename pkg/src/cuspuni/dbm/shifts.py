"""Time-dependent densities behind the coupled processes, and the shift functions.

All mean-field quantities are computed in the mass variable: a density with
quantile function ``Q`` has ``int f(E) rho(E) dE = int f(Q(s)) ds``. Positions
are offsets from the reference point (right gap edge or approximate minimum).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property
import numpy as np
from numpy.polynomial import chebyshev as C

from ..density import (_SMOOTH_W, _SMOOTH_X, DensityProfile, DysonSolver, EnsembleSpec, Flat, Full,
                       richardson_zero, scdos)
from ..errors import KindMismatch, NonConvergence
from ..quantiles import _mass_limits, solve_mass

REGULARIZATION = 1e-12
PROFILE_RESOLUTION = 1e-5


class Regime(str, Enum):
    GAP = "gap"
    MIN = "min"


@dataclass
class FlowSlice:
    """The density at one time: profile, reference point and signed mass range."""

    t: float
    profile: DensityProfile
    base: float
    mass_left: float      # mass below the reference point (left of the gap in gap mode)
    mass_right: float

    def offsets(self, s):
        """Positions, relative to the reference point, of signed masses ``s``."""
        return solve_mass(self.profile, self.base, s)


def flowed_spec(spec: EnsembleSpec, t: float) -> EnsembleSpec:
    """The ensemble after adding an independent Gaussian component of variance ``t``."""
    vp = spec.variance_profile
    if isinstance(vp, Flat):
        new = Flat(vp.c + t)
    else:
        new = Full(np.asarray(vp.matrix) + t / spec.N)
    return EnsembleSpec(spec.a, new, spec.beta)


class EnsembleFlow:
    """Semicircular flow of a deformed Wigner-type ensemble.

    For diagonal expectations the flow only adds ``t`` to the variance profile,
    so every time slice is a fresh self-consistent density.
    """

    def __init__(self, spec: EnsembleSpec, regime: Regime | str = Regime.GAP, cusp_hint: float = 0.0,
                 t_star: float | None = None, window=None, resolution: float = PROFILE_RESOLUTION):
        self.spec = spec
        self.regime = Regime(regime)
        self.cusp_hint = float(cusp_hint)
        self.t_star = t_star
        if self.regime == Regime.MIN and t_star is None:
            raise KindMismatch("the minimum regime needs the cusp time")
        self.resolution = resolution
        self._window = window
        self._slices: dict = {}

    def window(self, t: float):
        if self._window is not None:
            return self._window
        var = float(np.max(flowed_spec(self.spec, t).variance_matrix().sum(axis=1)))
        r = 2.0 * np.sqrt(var) + 0.25
        return (float(self.spec.a.min()) - r, float(self.spec.a.max()) + r)

    def solver(self, t: float) -> DysonSolver:
        return DysonSolver(flowed_spec(self.spec, t))

    def stieltjes_real(self, t: float, x: float) -> complex:
        """Boundary value of the Stieltjes transform at a real point."""
        etas = 1e-9 * np.array([8.0, 4.0, 2.0, 1.0])
        sol = self.solver(t)
        vals = np.array([sol(np.array([x + 1j * e]))[0] for e in etas])
        return complex(richardson_zero(etas, vals))

    def cusp_point(self) -> float:
        """Location of the cusp at ``t_star`` (the minimum of the density there)."""
        sol = self.solver(self.t_star)
        lo, hi = self.cusp_hint - 0.2, self.cusp_hint + 0.2
        for _ in range(40):
            xs = np.linspace(lo, hi, 17)
            k = int(np.argmin(sol.density(xs, eta_min=1e-10)))
            lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, 16)]
        return 0.5 * (lo + hi)

    def m_tilde(self, t: float, tol: float = 1e-13, max_iter: int = 400) -> float:
        """Real solution of ``x = c - (t - t*) Re m_t(x)``."""
        c = self.__dict__.setdefault("_cusp", self.cusp_point())
        x = c
        s = t - self.t_star
        for _ in range(max_iter):
            new = c - s * self.stieltjes_real(t, x).real
            if abs(new - x) < tol:
                return new
            x = 0.5 * (x + new)
        raise NonConvergence("minimum approximation did not converge")

    def at(self, t: float) -> FlowSlice:
        key = float(t)
        if key in self._slices:
            return self._slices[key]
        prof = scdos(flowed_spec(self.spec, t), self.window(t), resolution=self.resolution).tabulated()
        if self.regime == Regime.GAP:
            right = [a for a, b in prof.support if a > self.cusp_hint]
            left = [b for a, b in prof.support if right and b < min(right)]
            if not right or not left:
                raise KindMismatch(f"no gap near {self.cusp_hint} at t={t}")
            base = min(right)
        else:
            base = self.m_tilde(t)
        lo_m, hi_m = _mass_limits(prof, base)
        sl = FlowSlice(key, prof, base, -lo_m, hi_m)
        self._slices[key] = sl
        return sl


# ---------------------------------------------------------------------------
# mass-variable quadrature


@dataclass(frozen=True)
class MassGrid:
    """Quadrature nodes in signed mass, with panels aligned to particle masses ``k/N``."""

    N: int
    s_lo: float
    s_hi: float

    @cached_property
    def panels(self) -> np.ndarray:
        k_lo = int(np.ceil(self.s_lo * self.N - 1e-9))
        k_hi = int(np.floor(self.s_hi * self.N + 1e-9))
        inner = np.arange(k_lo, k_hi + 1) / self.N
        b = np.unique(np.concatenate([[self.s_lo], inner, [self.s_hi]]))
        return b[(b >= self.s_lo) & (b <= self.s_hi)]

    @cached_property
    def nodes(self):
        a, b = self.panels[:-1], self.panels[1:]
        s = (a[:, None] + (b - a)[:, None] * _SMOOTH_X[None, :]).ravel()
        w = ((b - a)[:, None] * _SMOOTH_W[None, :]).ravel()
        return s, w

    def select(self, lo, hi) -> np.ndarray:
        """Node mask of the mass interval ``[lo, hi]`` (rows broadcast)."""
        s = self.nodes[0]
        return (s[None, :] >= np.atleast_1d(lo)[:, None]) & (s[None, :] <= np.atleast_1d(hi)[:, None])


def chebyshev_lobatto(t0: float, t1: float, n: int) -> np.ndarray:
    k = np.arange(n)
    return t0 + 0.5 * (t1 - t0) * (1 - np.cos(np.pi * k / (n - 1)))


def _bary_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    w[1::2] *= -1
    return w


def bary_eval(nodes: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    """Barycentric interpolation at Chebyshev-Lobatto ``nodes`` (values along axis 0)."""
    d = t - nodes
    hit = np.nonzero(d == 0)[0]
    if hit.size:
        return values[hit[0]]
    w = _bary_weights(nodes.size) / d
    return np.tensordot(w, values, axes=(0, 0)) / w.sum()


class QuantileTable:
    """Offsets of a flow at the mass nodes, tabulated at Chebyshev times."""

    def __init__(self, flow, grid: MassGrid, times: np.ndarray):
        self.flow, self.grid, self.times = flow, grid, np.asarray(times, dtype=float)
        s, _ = grid.nodes
        self.offsets = np.array([flow.at(t).offsets(s) for t in self.times])
        self.bases = np.array([flow.at(t).base for t in self.times])

    def at(self, t: float) -> np.ndarray:
        return bary_eval(self.times, self.offsets, t)

    def base(self, t: float) -> float:
        return float(bary_eval(self.times, self.bases, t))


def common_mass_range(flows, times):
    lo = max(-flow.at(t).mass_left for flow in flows for t in times)
    hi = min(flow.at(t).mass_right for flow in flows for t in times)
    return lo, hi


def mass_stieltjes(offsets: np.ndarray, grid: MassGrid, z: complex, regime: Regime,
                   density_at_base: float | None = None) -> complex:
    """``int ds / (offset(s) - z)``; in the minimum regime the ``1/s`` pole is subtracted."""
    s, w = grid.nodes
    if regime == Regime.GAP or density_at_base is None:
        return complex(np.sum(w / (offsets - z)))
    lin = s / density_at_base
    with np.errstate(divide="ignore", invalid="ignore"):
        reg = np.where(s == 0, 0.0, 1.0 / (offsets - z) - 1.0 / lin)
    pole = density_at_base * np.log(grid.s_hi / -grid.s_lo)
    return complex(np.sum(w * reg) + pole)


def _density_at_base(sl: FlowSlice) -> float:
    return float(sl.profile.density(np.array([sl.base]))[0])


# ---------------------------------------------------------------------------
# shift functions


@dataclass
class ShiftFunctions:
    """Shift functions of one interpolation parameter, tabulated at Chebyshev times.

    ``anchor_x``/``anchor_y`` are ``Re m`` at the edge (gap regime) or minus the
    velocity of the approximate minimum (minimum regime).
    """

    alpha: float
    regime: Regime
    times: np.ndarray
    h_values: np.ndarray
    anchor_x: np.ndarray
    anchor_y: np.ndarray
    mbar_values: np.ndarray       # Re m_bar at the interpolated reference point

    def __post_init__(self):
        t0, t1 = float(self.times[0]), float(self.times[-1])
        self._dom = (t0, t1)
        deg = self.times.size - 1
        self._h_cheb = C.chebfit(self._u(self.times), self.h_values, deg) if deg else np.array([self.h_values[0]])
        self._H_cheb = C.chebint(self._h_cheb, lbnd=-1) * (t1 - t0) / 2

    def _u(self, t):
        t0, t1 = self._dom
        return (2 * np.asarray(t, dtype=float) - t0 - t1) / (t1 - t0) if t1 > t0 else 0.0 * np.asarray(t)

    def h(self, t: float) -> float:
        return float(C.chebval(self._u(t), self._h_cheb))

    def H(self, t: float) -> float:
        """Antiderivative of ``h`` vanishing at the initial time."""
        return float(C.chebval(self._u(t), self._H_cheb))

    def anchor(self, which: str, t: float) -> float:
        return float(bary_eval(self.times, self.anchor_x if which == "x" else self.anchor_y, t))

    def _shift(self, t: float) -> float:
        return self.alpha * self.anchor("x", t) + (1 - self.alpha) * self.anchor("y", t) - self.h(t)

    def phi_alpha(self, t: float) -> float:
        """Drift shift of the gap regime."""
        if self.regime != Regime.GAP:
            raise KindMismatch("phi_alpha is only defined in the gap regime")
        return self._shift(t)

    def psi_alpha(self, t: float) -> float:
        """Drift shift of the minimum regime."""
        if self.regime != Regime.MIN:
            raise KindMismatch("psi_alpha is only defined in the minimum regime")
        return self._shift(t)

    def drift(self, t: float) -> float:
        return self._shift(t)

    def mbar(self, t: float) -> float:
        return float(bary_eval(self.times, self.mbar_values, t))


@dataclass
class PairTables:
    """Quantile tables of both flows on a shared mass grid."""

    grid: MassGrid
    x: QuantileTable
    y: QuantileTable
    regime: Regime

    def rho_base(self, which: str, t: float) -> float | None:
        if self.regime == Regime.GAP:
            return None
        table = self.x if which == "x" else self.y
        return _density_at_base(table.flow.at(t)) if t in table.times else None


def build_tables(flow_x, flow_y, N: int, t_range, nodes: int = 7) -> PairTables:
    times = chebyshev_lobatto(t_range[0], t_range[1], nodes) if t_range[1] > t_range[0] \
        else np.array([float(t_range[0])])
    regime = flow_x.regime
    if flow_y.regime != regime:
        raise KindMismatch("both flows must be in the same regime")
    lo, hi = common_mass_range([flow_x, flow_y], times)
    grid = MassGrid(N, lo, hi)
    return PairTables(grid, QuantileTable(flow_x, grid, times), QuantileTable(flow_y, grid, times), regime)


def _stieltjes_at_nodes(tables: PairTables, alpha: float, eps: float):
    """Real parts of ``m_x``, ``m_y`` and ``m_bar`` at the reference points, per time node."""
    g = tables.grid
    out = []
    for k, t in enumerate(tables.x.times):
        sx, sy = tables.x.flow.at(t), tables.y.flow.at(t)
        px, py = tables.x.offsets[k], tables.y.offsets[k]
        rx = _density_at_base(sx) if tables.regime == Regime.MIN else None
        ry = _density_at_base(sy) if tables.regime == Regime.MIN else None
        mx = mass_stieltjes(px, g, 0.0, tables.regime, rx).real
        my = mass_stieltjes(py, g, 0.0, tables.regime, ry).real

        def mbar(a):
            rb = None if rx is None else 1.0 / (a / rx + (1 - a) / ry)
            return mass_stieltjes(a * px + (1 - a) * py, g, 1j * eps, tables.regime, rb).real

        out.append((mx, my, mbar(alpha), mbar(1.0), mbar(0.0)))
    return np.array(out)


def build_shifts(tables: PairTables, alpha: float, eps: float = REGULARIZATION,
                 velocity_step: float | None = None) -> ShiftFunctions:
    """Shift functions at the tabulated times.

    ``h`` is the regularized mismatch between ``Re m_bar`` and the convex
    combination of the endpoint values, normalized to vanish at ``alpha`` 0 and 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    v = _stieltjes_at_nodes(tables, alpha, eps)
    mx, my, mb, mb1, mb0 = v.T

    def hss(mbar_a, a):
        return -mbar_a + (1 - a) * my + a * mx

    h = hss(mb, alpha) - alpha * hss(mb1, 1.0) - (1 - alpha) * hss(mb0, 0.0)
    if alpha in (0.0, 1.0):
        h = np.zeros_like(h)
    times = tables.x.times
    if tables.regime == Regime.GAP:
        ax, ay = mx, my
    else:
        step = velocity_step or 1e-4 * max(times[-1] - times[0], 1e-2)
        ax = np.array([-minimum_velocity(tables.x.flow, t, step) for t in times])
        ay = np.array([-minimum_velocity(tables.y.flow, t, step) for t in times])
    return ShiftFunctions(alpha, tables.regime, times, h, ax, ay, mb)


def minimum_velocity(flow, t: float, step: float) -> float:
    """Central difference of the approximate minimum location."""
    return (flow.m_tilde(t + step) - flow.m_tilde(t - step)) / (2 * step)


def trailing_quantiles(tables: PairTables, alpha: float, labels: np.ndarray, t: float) -> np.ndarray:
    """Shifted semiquantiles of the interpolating density for the given labels at time ``t``."""
    labels = np.asarray(labels)
    cache = tables.__dict__.setdefault("_semi", {})
    key = tuple(labels.tolist())
    if key not in cache:
        s = np.where(labels > 0, (labels - 0.5) / tables.grid.N, (labels + 0.5) / tables.grid.N)
        cache[key] = (np.array([tables.x.flow.at(tt).offsets(s) for tt in tables.x.times]),
                      np.array([tables.y.flow.at(tt).offsets(s) for tt in tables.y.times]))
    qx, qy = cache[key]
    return alpha * bary_eval(tables.x.times, qx, t) + (1 - alpha) * bary_eval(tables.y.times, qy, t)
