"""Shifted interpolated process and its short-range approximation.

Labels run over ``[-N, N] \\ {0}``; label ``i > 0`` owns the mass interval
``[(i-1)/N, i/N]`` and label ``i < 0`` owns ``[i/N, (i+1)/N]``, measured from the
reference point. Labels outside the real range are ghosts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import IndexMismatch, RangeError
from .kernels import masked_drift, pair_drift
from .noise import BrownianSource
from .particles import Trajectory, integrate, padded_labels, stable_dt
from .shifts import PairTables, Regime, ShiftFunctions, trailing_quantiles

EXPONENT_MARGIN = 0.05


@dataclass(frozen=True)
class ExponentConfig:
    omega_1: float = 0.1
    omega_ell: float = 0.15
    omega_A: float = 0.3
    c_star: float = 2.0

    def validate(self) -> None:
        slack = 1e-12
        if not (self.omega_1 + EXPONENT_MARGIN <= self.omega_ell + slack
                and self.omega_ell + EXPONENT_MARGIN <= self.omega_A + slack):
            raise RangeError(f"exponents must satisfy omega_1 << omega_ell << omega_A with margin "
                             f"{EXPONENT_MARGIN}: got {self}")
        if not self.c_star > 0 or not 0 < self.omega_1 < 0.5:
            raise RangeError("c_star must be positive and omega_1 in (0, 1/2)")


def label_mass_bounds(labels) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper mass (times N) of the interval owned by each label."""
    labels = np.asarray(labels)
    lo = np.where(labels > 0, labels - 1, labels)
    return lo, lo + 1


class ShortRangeSet:
    """Index pairs that interact directly in the short-range process."""

    def __init__(self, N: int, config: ExponentConfig = ExponentConfig(), ell: float | None = None,
                 i_star: float | None = None):
        config.validate()
        self.N, self.config = N, config
        self.ell = int(ell) if ell is not None else max(1, int(np.floor(N ** config.omega_ell)))
        self.i_star = int(i_star) if i_star is not None else int(np.floor(N ** (0.5 + config.c_star * config.omega_1)))
        self.small_cutoff = N ** config.omega_A
        self.labels = padded_labels(N)

    def contains(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        ai, aj = np.abs(i), np.abs(j)
        reach = self.ell * (10 * self.ell**3 + ai**0.75 + aj**0.75)
        far = (ai > self.i_star / 2) & (aj > self.i_star / 2)
        return (np.abs(i - j) <= reach) | far

    @cached_property
    def mask(self) -> np.ndarray:
        L = self.labels
        m = self.contains(L[:, None], L[None, :])
        np.fill_diagonal(m, False)
        return m

    @cached_property
    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """``j_-(i)``, ``j_+(i)``: extreme labels of each row (the diagonal included)."""
        m = self.mask | np.eye(self.labels.size, dtype=bool)
        first = np.argmax(m, axis=1)
        last = m.shape[1] - 1 - np.argmax(m[:, ::-1], axis=1)
        return self.labels[first], self.labels[last]

    @cached_property
    def regimes(self) -> np.ndarray:
        """0: small labels, 1: middle labels, 2: labels beyond ``i_star / 2``."""
        a = np.abs(self.labels)
        return np.where(a > self.i_star / 2, 2, np.where(a <= self.small_cutoff, 0, 1))

    def rows_are_intervals(self) -> bool:
        lo, hi = self.row_bounds
        m = self.mask | np.eye(self.labels.size, dtype=bool)
        ok = True
        for r in np.nonzero(self.regimes < 2)[0]:
            span = (self.labels >= lo[r]) & (self.labels <= hi[r])
            ok &= bool(np.array_equal(span, m[r]))
        return ok

    @property
    def covers_everything(self) -> bool:
        return bool(np.all(self.mask | np.eye(self.labels.size, dtype=bool)))


@dataclass
class ScenarioState:
    """Everything the drifts need: label layout, tables and shifts."""

    N: int
    alpha: float
    tables: PairTables
    shifts: ShiftFunctions
    real: np.ndarray                     # mask of real labels
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.labels is None:
            self.labels = padded_labels(self.N)


def initial_positions(state: ScenarioState, ghost_offset: float) -> np.ndarray:
    """Interpolated trailing semiquantiles for real labels, ghosts far away."""
    L = state.labels
    z = np.where(L > 0, ghost_offset + np.abs(L) * state.N, -ghost_offset - np.abs(L) * state.N).astype(float)
    z[state.real] = trailing_quantiles(state.tables, state.alpha, L[state.real], state.tables.x.times[0])
    if np.any(np.diff(z) <= 0):
        raise IndexMismatch("initial positions are not ordered")
    return z


def real_labels_mask(N: int, mass_left: float, mass_right: float) -> np.ndarray:
    """Labels whose mass interval lies inside ``[-mass_left, mass_right]``."""
    lo, hi = label_mass_bounds(padded_labels(N))
    return (lo >= -round(mass_left * N)) & (hi <= round(mass_right * N))


def _rigidity(traj: Trajectory, state: ScenarioState, row: int, window: float) -> np.ndarray:
    sel = state.real & (np.abs(state.labels) <= window)
    L = state.labels[sel]
    dev = [np.max(np.abs(traj.states[k, row, sel] - trailing_quantiles(state.tables, state.alpha, L, t)))
           for k, t in enumerate(traj.times)]
    return np.array(dev)


@dataclass
class Run:
    trajectory: Trajectory
    rigidity: np.ndarray            # max |z_i - trailing quantile| over the rigidity window, per snapshot
    rigidity_window: float
    seed: int


def _default_dt(z0, N, t_end, dt):
    if dt is not None:
        return dt
    return stable_dt(z0, N, cap=t_end / 20)


def run_interpolated(state: ScenarioState, t_end: float, seed: int, snapshots: int = 11,
                     ghost_offset: float = 1e6, dt: float | None = None, zero_noise: bool = False,
                     rigidity_window: float | None = None, keep_log: bool = False) -> Run:
    """Evolve the shifted interpolated process from its trailing semiquantiles."""
    N = state.N
    z0 = initial_positions(state, ghost_offset)
    times = np.linspace(state.tables.x.times[0], state.tables.x.times[0] + t_end, snapshots)
    src = BrownianSource(seed, z0.size, zero=zero_noise)
    phi = state.shifts.drift

    def drift(z, t):
        return (pair_drift(z[0], 1.0 / N) + phi(t))[None, :]

    traj = integrate(z0[None, :], times, drift, src, np.arange(z0.size), N, _default_dt(z0, N, t_end, dt),
                     labels=state.labels, keep_log=keep_log)
    w = np.sqrt(N) if rigidity_window is None else rigidity_window
    return Run(traj, _rigidity(traj, state, 0, w), w, seed)


class ShortRangeDrift:
    """Drift of the short-range process, with the mean-field terms in the mass variable."""

    def __init__(self, state: ScenarioState, sr: ShortRangeSet):
        self.state, self.sr = state, sr
        N = state.N
        grid = state.tables.grid
        s, w = grid.nodes
        self.weights = w
        lo, hi = sr.row_bounds
        row_lo = label_mass_bounds(lo)[0] / N
        row_hi = label_mass_bounds(hi)[1] / N
        reg = sr.regimes
        outside = ~((s[None, :] >= row_lo[:, None]) & (s[None, :] <= row_hi[:, None]))
        self.small = np.nonzero((reg == 0) & state.real)[0]
        self.middle = np.nonzero((reg == 1) & state.real)[0]
        M = int(np.ceil(3 * sr.i_star / 4))
        inner = np.abs(s) <= (M - 1) / N
        self.small_mask = outside[self.small]
        self.middle_mask = outside[self.middle] & inner[None, :]
        L = state.labels
        self.far_middle = (~sr.mask) & (np.abs(L)[None, :] >= 3 * sr.i_star / 4)
        self.far_middle[~np.isin(np.arange(L.size), self.middle)] = False
        self.far_large = ~sr.mask
        self.far_large[reg != 2] = False
        np.fill_diagonal(self.far_large, False)
        self.far = self.far_middle | self.far_large

    def _phi_y(self, t):
        return self.state.tables.y.at(t)

    def _phi_bar(self, t):
        a = self.state.alpha
        return a * self.state.tables.x.at(t) + (1 - a) * self.state.tables.y.at(t)

    def mean_field(self, zhat, t):
        out = np.zeros_like(zhat)
        w = self.weights
        if self.small.size:
            py = self._phi_y(t)
            d = zhat[self.small, None] - py[None, :]
            out[self.small] = np.sum(np.where(self.small_mask, w / d, 0.0), axis=1) + self.state.shifts.anchor("y", t)
        if self.middle.size:
            pb = self._phi_bar(t)
            d = zhat[self.middle, None] - pb[None, :]
            out[self.middle] = np.sum(np.where(self.middle_mask, w / d, 0.0), axis=1)
        return out

    def potential(self, zhat, t):
        """Diagonal of the multiplication operator: minus the mean-field integrals of ``(z - phi)^-2``."""
        v = np.zeros_like(zhat)
        w = self.weights
        if self.small.size:
            d = zhat[self.small, None] - self._phi_y(t)[None, :]
            v[self.small] = -np.sum(np.where(self.small_mask, w / d**2, 0.0), axis=1)
        if self.middle.size:
            d = zhat[self.middle, None] - self._phi_bar(t)[None, :]
            v[self.middle] = -np.sum(np.where(self.middle_mask, w / d**2, 0.0), axis=1)
        return v

    def __call__(self, ztilde, zhat, t):
        N = self.state.N
        base = masked_drift(zhat, ztilde, self.sr.mask, self.far, 1.0 / N)
        shift = np.full(zhat.shape, self.state.shifts.drift(t))
        shift[self.small] = 0.0
        return base + self.mean_field(zhat, t) + shift


def run_short_range(state: ScenarioState, sr: ShortRangeSet, t_end: float, seed: int, snapshots: int = 11,
                    ghost_offset: float = 1e6, dt: float | None = None, zero_noise: bool = False,
                    keep_log: bool = False) -> Trajectory:
    """Jointly evolve the interpolated process (row 0) and its short-range approximation (row 1).

    Both rows use the same Brownian increments and start from the same positions.
    """
    N = state.N
    z0 = initial_positions(state, ghost_offset)
    times = np.linspace(state.tables.x.times[0], state.tables.x.times[0] + t_end, snapshots)
    src = BrownianSource(seed, z0.size, zero=zero_noise)
    phi = state.shifts.drift
    short = ShortRangeDrift(state, sr)

    def drift(z, t):
        return np.stack([pair_drift(z[0], 1.0 / N) + phi(t), short(z[0], z[1], t)])

    return integrate(np.stack([z0, z0]), times, drift, src, np.arange(z0.size), N,
                     _default_dt(z0, N, t_end, dt), labels=state.labels, keep_log=keep_log)
