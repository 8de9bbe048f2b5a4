"""Free semicircular convolution of a density and tracking of its near-cusp feature."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .density import EDGE_THRESHOLD, DensityProfile, _ksection, richardson_zero, sample_profile
from .errors import AmbiguousWindow, BadFit, BracketInvalid, NonConvergence
from .shape import SQRT3

SUBORDINATION_TOL = 1e-10


class _BaseEvaluator:
    """Stieltjes transform of the base density with derivative and warm-start state."""

    def __init__(self, base: DensityProfile):
        s = base.stieltjes
        self.solver = s if hasattr(s, "evaluate") else None
        self.fn = s
        self.deriv = getattr(base, "stieltjes_derivative", None)

    def __call__(self, zeta, state=None):
        zeta = np.asarray(zeta, dtype=complex)
        if self.solver is not None:
            return self.solver.evaluate(zeta, state)
        m = np.asarray(self.fn(zeta), dtype=complex)
        if self.deriv is not None:
            dm = np.asarray(self.deriv(zeta), dtype=complex)
        else:
            h = 1e-5 * zeta.imag
            dm = (np.asarray(self.fn(zeta + h)) - np.asarray(self.fn(zeta - h))) / (2 * h)
        return m, dm, None


def _take(state, idx):
    return None if state is None else state[idx]


def _subordinate(ev: _BaseEvaluator, z, t, w0, state, tol, max_iter=200, damping=0.5,
                 newton_switch=1e-2):
    """Solve ``w = m(z + t w)`` for an array of ``z``; returns ``(w, state, defect)``."""
    w = np.array(w0, dtype=complex)
    zeta = z + t * w
    m, dm, state = ev(zeta, state)
    F = w - m
    d = np.abs(F)
    for _ in range(max_iter):
        act = d > tol
        if not act.any():
            break
        idx = np.nonzero(act)[0]
        wa, Fa, da = w[idx], F[idx], d[idx]
        step = np.where(da < newton_switch, -Fa / (1.0 - t * dm[idx]), -damping * Fa)
        lam = np.ones(idx.size)
        sa = _take(state, idx)
        accepted = np.zeros(idx.size, dtype=bool)
        cand_w = wa.copy()
        cand_m = m[idx].copy()
        cand_dm = dm[idx].copy()
        cand_s = None if sa is None else sa.copy()
        for _ in range(30):
            todo = ~accepted
            if not todo.any():
                break
            k = np.nonzero(todo)[0]
            trial = wa[k] + lam[k] * step[k]
            ok_h = (z[idx][k] + t * trial).imag > 0
            trial = np.where(ok_h, trial, wa[k])
            mt, dmt, st = ev(z[idx][k] + t * trial, _take(sa, k))
            dt_ = np.abs(trial - mt)
            good = ok_h & ((dt_ < da[k]) | (lam[k] < 1e-6))
            acc = k[good]
            cand_w[acc], cand_m[acc], cand_dm[acc] = trial[good], mt[good], dmt[good]
            if cand_s is not None:
                cand_s[acc] = st[good]
            accepted[acc] = True
            lam[k[~good]] *= 0.5
        w[idx], m[idx], dm[idx] = cand_w, cand_m, cand_dm
        if state is not None:
            state[idx] = cand_s
        F[idx] = w[idx] - m[idx]
        d[idx] = np.abs(F[idx])
    return w, state, d


def free_convolve(base: DensityProfile, t: float, z, tol: float = 1e-12):
    """Stieltjes transform of the base density convolved with a semicircle of variance ``t``."""
    return FlowState(base, t, tol=tol).m_t(z)


@dataclass
class FlowConfig:
    eta_min: float = 1e-12
    levels: int = 4
    tol: float = 1e-12
    eta_top: float = 1.0
    resolution: float = 1e-9          # grid resolution of sampled profiles
    edge_resolution: float = 1e-10    # gaps narrower than 2x this count as closed
    density_resolution: float = 1e-6  # minima lower than 2x this count as zero


class FlowState:
    """Density of the base after flowing for time ``t``."""

    def __init__(self, base: DensityProfile, t: float, config: FlowConfig | None = None, tol=None):
        if t < 0:
            raise ValueError("flow time must be nonnegative")
        self.base = base
        self.t = float(t)
        self.config = config or FlowConfig()
        if tol is not None:
            self.config.tol = tol
        self._ev = _BaseEvaluator(base)
        self._rho_t: dict = {}

    # Stieltjes transform ---------------------------------------------------
    def _ladder(self, E, etas):
        """Solve along ``E + i eta`` for decreasing ``etas``; returns all levels."""
        ev, t, tol = self._ev, self.t, self.config.tol
        E = np.asarray(E, dtype=float)
        out = []
        path = []
        eta = self.config.eta_top
        while eta > etas[0]:
            path.append(eta)
            eta *= 0.25
        path += list(etas)
        keep = set(range(len(path) - len(etas), len(path)))
        z = E + 1j * path[0]
        m0, _, state = ev(z, None)
        w = m0
        if t > 0:
            w, state, d = _subordinate(ev, z, t, w, state, tol)
            if np.any(d > tol):
                raise NonConvergence("subordination failed at the top of the ladder")
        if 0 in keep:
            out.append(w.copy())
        for n, eta in enumerate(path[1:], start=1):
            z = E + 1j * eta
            if t == 0:
                w, _, state = ev(z, state)
            else:
                w, state, d = _subordinate(ev, z, t, w, state, tol)
                if np.any(d > SUBORDINATION_TOL):
                    raise NonConvergence("subordination defect above 1e-10")
            if n in keep:
                out.append(w.copy())
        return np.array(out)

    def m_t(self, z):
        z = np.asarray(z, dtype=complex)
        zf = z.ravel()
        if np.any(zf.imag <= 0):
            raise ValueError("spectral parameter must satisfy Im z > 0")
        out = np.empty(zf.shape, dtype=complex)
        for eta in np.unique(zf.imag):
            sel = zf.imag == eta
            if self.t == 0:
                out[sel] = np.asarray(self._ev.fn(zf[sel]), dtype=complex)
            else:
                out[sel] = self._ladder(zf[sel].real, [eta])[0]
        return out.reshape(z.shape) if z.ndim else complex(out[0])

    def boundary_value(self, E):
        """``m_t(E + i0)`` by Richardson extrapolation of the eta ladder."""
        c = self.config
        E = np.atleast_1d(np.asarray(E, dtype=float))
        etas = c.eta_min * 2.0 ** np.arange(c.levels - 1, -1, -1)
        vals = self._ladder(E.ravel(), list(etas))
        return richardson_zero(etas, vals).reshape(E.shape)

    def density(self, E):
        E = np.asarray(E, dtype=float)
        out = np.maximum(np.asarray(self.boundary_value(E)).imag, 0.0) / np.pi
        return out if E.ndim else float(out[0])

    def rho_t(self, window, resolution=None) -> DensityProfile:
        key = (float(window[0]), float(window[1]), resolution)
        if key not in self._rho_t:
            res = self.config.resolution if resolution is None else resolution
            self._rho_t[key] = sample_profile(self.density, window, res, stieltjes=self.m_t)
        return self._rho_t[key]


# ---------------------------------------------------------------------------
# features


class CuspKind(str, Enum):
    EXACT = "ExactCusp"
    GAP = "SmallGap"
    MIN = "NonzeroMin"


@dataclass(frozen=True)
class GapRecord:
    e_minus: float
    e_plus: float
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", self.e_plus - self.e_minus)
        if self.delta < 0:
            raise ValueError("gap edges out of order")

    @property
    def b(self):
        return 0.5 * (self.e_minus + self.e_plus)


@dataclass(frozen=True)
class MinRecord:
    m_loc: float
    m_tilde: float
    height: float

    @property
    def b(self):
        return self.m_loc


@dataclass(frozen=True)
class CuspReport:
    kind: CuspKind
    b: float
    gamma: float
    t_star: float = float("nan")
    alpha_pearcey: float = 0.0
    delta: float = 0.0
    height: float = 0.0


def pearcey_parameter(kind: CuspKind, gamma: float, N: int, delta: float = 0.0, height: float = 0.0):
    if kind == CuspKind.EXACT:
        return 0.0
    if kind == CuspKind.GAP:
        return 3.0 * (gamma * delta / 4.0) ** (2.0 / 3.0) * np.sqrt(N)
    return -((np.pi * height / gamma) ** 2) * np.sqrt(N)


def report_from_feature(feature, gamma: float, N: int, t_star: float = float("nan")) -> CuspReport:
    """Cusp report with the Pearcey parameter implied by the feature size."""
    if isinstance(feature, CuspReport):
        return CuspReport(feature.kind, feature.b, gamma, t_star, 0.0)
    if isinstance(feature, GapRecord):
        a = pearcey_parameter(CuspKind.GAP, gamma, N, delta=feature.delta)
        return CuspReport(CuspKind.GAP, feature.b, gamma, t_star, a, delta=feature.delta)
    a = pearcey_parameter(CuspKind.MIN, gamma, N, height=feature.height)
    return CuspReport(CuspKind.MIN, feature.b, gamma, t_star, a, height=feature.height)


def _minimize(fn, lo, hi, xtol, floor, points=33, rounds=60):
    """Batched grid shrinking around the minimum of ``fn``.

    Stops early at the first sample not exceeding ``floor``.
    """
    for _ in range(rounds):
        xs = np.linspace(lo, hi, points)
        v = fn(xs)
        k = int(np.argmin(v))
        if v[k] <= floor:
            return float(xs[k]), float(v[k])
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, points - 1)]
        if hi - lo <= xtol:
            break
    x = 0.5 * (lo + hi)
    return x, float(fn(np.array([x]))[0])


def solve_m_tilde(state: FlowState, t_star: float, c: float, seed: float, tol=1e-13, max_iter=200):
    """Real solution of ``x = c - (t - t*) Re m_t(x)`` by damped iteration from ``seed``."""
    x = float(seed)
    s = state.t - t_star
    for _ in range(max_iter):
        new = c - s * float(np.real(state.boundary_value(np.array([x]))[0]))
        if abs(new - x) < tol:
            return new
        x = 0.5 * x + 0.5 * new
    raise NonConvergence("m_tilde iteration did not converge")


def locate_features(state: FlowState, window, cusp: tuple[float, float] | None = None,
                    coarse: int = 65):
    """Find the single gap, minimum or cusp of ``rho_t`` inside ``window``.

    ``cusp=(t_star, c)`` enables the implicit minimum approximation ``m_tilde``.
    """
    cfg = state.config
    lo, hi = map(float, window)
    threshold = EDGE_THRESHOLD * (hi - lo)
    xs = np.linspace(lo, hi, coarse)
    rho = state.density(xs)
    zero = rho <= threshold
    runs = np.count_nonzero(zero[1:] & ~zero[:-1]) + int(zero[0])
    if runs > 1:
        raise AmbiguousWindow(f"{runs} gaps in window")
    if zero[0] or zero[-1]:
        raise AmbiguousWindow("window boundary lies outside the support")
    k = int(np.argmin(rho))
    if k in (0, coarse - 1):
        raise AmbiguousWindow("density minimum sits on the window boundary")
    a, b = xs[k - 1], xs[k + 1]
    if zero[k]:
        x0, h = float(xs[k]), float(rho[k])
    else:
        x0, h = _minimize(state.density, a, b, xtol=1e-3 * cfg.resolution, floor=threshold)
    if h <= threshold:
        left = _ksection(state.density, a, x0, None, lambda v: v > threshold, 1e-3 * cfg.resolution)
        right = _ksection(state.density, x0, b, None, lambda v: v > threshold, 1e-3 * cfg.resolution)
        em, ep = 0.5 * sum(left), 0.5 * sum(right)
        if ep - em > 2 * cfg.edge_resolution:
            return GapRecord(em, ep)
        return CuspReport(CuspKind.EXACT, 0.5 * (em + ep), float("nan"), state.t)
    if h > 2 * cfg.density_resolution:
        mt = solve_m_tilde(state, cusp[0], cusp[1], x0) if cusp is not None else float("nan")
        return MinRecord(x0, mt, h)
    return CuspReport(CuspKind.EXACT, x0, float("nan"), state.t)


def _signed_size(feature) -> float:
    if isinstance(feature, GapRecord):
        return feature.delta
    if isinstance(feature, MinRecord):
        return -feature.height
    return 0.0


def find_cusp_time(base: DensityProfile, bracket, window, config: FlowConfig | None = None,
                   ttol: float = 1e-8, fit: bool = True) -> CuspReport:
    """Bisect the flow time on the signed feature size until the cusp forms."""
    t_lo, t_hi = map(float, bracket)
    cfg = config or FlowConfig()
    f_lo = locate_features(FlowState(base, t_lo, cfg), window)
    f_hi = locate_features(FlowState(base, t_hi, cfg), window)
    if not (_signed_size(f_lo) > 0 and _signed_size(f_hi) < 0):
        raise BracketInvalid("feature sizes at the bracket ends do not straddle a cusp")
    feature = None
    while t_hi - t_lo > ttol:
        t = 0.5 * (t_lo + t_hi)
        feature = locate_features(FlowState(base, t, cfg), window)
        s = _signed_size(feature)
        if s > 0:
            t_lo = t
        elif s < 0:
            t_hi = t
        else:
            t_lo = t_hi = t
            break
    t_star = 0.5 * (t_lo + t_hi)
    state = FlowState(base, t_star, cfg)
    feature = locate_features(state, window)
    b = feature.b
    gamma = float("nan")
    if fit:
        gamma = fit_slope(state, b).gamma
    return CuspReport(CuspKind.EXACT, b, gamma, t_star, 0.0)


# ---------------------------------------------------------------------------
# slope fit


@dataclass(frozen=True)
class SlopeFit:
    gamma: float
    exponent: float
    residual: float


def fit_slope(rho, b: float, omega=(1e-4, 1e-2), points: int = 25, exponent_tol: float = 0.05):
    """Fit ``rho(b + w) = sqrt(3) gamma^{4/3} |w|^{1/3} / (2 pi)`` on both sides of ``b``.

    ``rho`` is any object with a vectorized ``density`` method or a callable.
    """
    fn = rho.density if hasattr(rho, "density") else rho
    w = np.logspace(np.log10(omega[0]), np.log10(omega[1]), points)
    x = np.concatenate([b - w[::-1], b + w])
    aw = np.concatenate([w[::-1], w])
    y = np.asarray(fn(x), dtype=float)
    if np.any(y <= 0):
        raise BadFit("density vanishes inside the fit window")
    lx, ly = np.log(aw), np.log(y)
    p, c = np.polyfit(lx, ly, 1)
    if abs(p - 1.0 / 3.0) > exponent_tol:
        raise BadFit(f"fitted exponent {p:.4f} is not 1/3")
    intercept = float(np.mean(ly - lx / 3.0))
    resid = float(np.sqrt(np.mean((ly - lx / 3.0 - intercept) ** 2)))
    gamma = (2 * np.pi * np.exp(intercept) / SQRT3) ** 0.75
    return SlopeFit(float(gamma), float(p), resid)


# ---------------------------------------------------------------------------
# motion diagnostics


@dataclass(frozen=True)
class MotionReport:
    edge_residual: float = float("nan")
    quantile_residual: float = float("nan")
    m_tilde_residual: float = float("nan")
    burgers_defect: dict = field(default_factory=dict)


def _central(f_plus, f_minus, dt):
    return (f_plus - f_minus) / (2 * dt)


def edge_velocity_residual(base, t, dt, edge_fn):
    """``|de/dt + m_t(e)|`` for a right edge returned by ``edge_fn(state)``."""
    sp, sm, s0 = (FlowState(base, t + dt), FlowState(base, t - dt), FlowState(base, t))
    v = _central(edge_fn(sp), edge_fn(sm), dt)
    e = edge_fn(s0)
    return abs(v + float(np.real(s0.boundary_value(np.array([e]))[0])))


def quantile_velocity_residual(base, t, dt, mass, window):
    """``|dq/dt + Re m_t(q)|`` for the point ``q`` carrying ``mass`` to its left in ``window``."""
    from scipy.optimize import brentq

    def q_of(state):
        prof = state.rho_t(window)
        return brentq(lambda x: float(prof.cumulative(x)[0]) - mass, *prof.hull, xtol=1e-14)

    sp, sm, s0 = (FlowState(base, t + dt), FlowState(base, t - dt), FlowState(base, t))
    v = _central(q_of(sp), q_of(sm), dt)
    q = q_of(s0)
    return abs(v + float(np.real(s0.boundary_value(np.array([q]))[0])))


def burgers_defect(base, t, dt, z):
    """``|dm/dt - m dm/dz|`` at complex points ``z`` by central differences."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    sp, sm, s0 = (FlowState(base, t + dt), FlowState(base, max(t - dt, 0.0)), FlowState(base, t))
    span = (t + dt) - max(t - dt, 0.0)
    mdot = (sp.m_t(z) - sm.m_t(z)) / span
    h = 1e-4 * z.imag
    mprime = (s0.m_t(z + h) - s0.m_t(z - h)) / (2 * h)
    return np.abs(mdot - s0.m_t(z) * mprime)


def motion_check(base, t, dt, edge_fn=None, quantile=None, m_tilde=None, eta=(1e-2, 1e-3),
                 E0: float = 0.0) -> MotionReport:
    """Finite-difference checks of the edge, quantile, minimum and Burgers relations.

    ``quantile=(mass, window)``; ``m_tilde=(t_star, c)``.
    """
    er = edge_velocity_residual(base, t, dt, edge_fn) if edge_fn else float("nan")
    qr = quantile_velocity_residual(base, t, dt, *quantile) if quantile else float("nan")
    mr = float("nan")
    if m_tilde is not None:
        ts, c = m_tilde

        def mt(s):
            return solve_m_tilde(s, ts, c, c)

        sp, sm, s0 = FlowState(base, t + dt), FlowState(base, t - dt), FlowState(base, t)
        v = _central(mt(sp), mt(sm), dt)
        x = mt(s0)
        mr = abs(v + float(np.real(s0.boundary_value(np.array([x]))[0])))
    bd = {e: float(burgers_defect(base, t, dt, np.array([E0 + 1j * e]))[0]) for e in eta}
    return MotionReport(er, qr, mr, bd)
