"""Linearized short-range operators and heat-flow diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad

from ..errors import DomainError, StiffnessFailure, ZeroVector
from .kernels import coupling_matrix, laplacian_apply
from .particles import Trajectory
from .shortrange import ShortRangeDrift, ShortRangeSet


class OperatorKind(str, Enum):
    B = "B"
    V = "V"
    L = "L"


@dataclass(frozen=True)
class DiscreteOperator:
    """``L = B + V`` at one snapshot: ``(Bf)_i = sum_A B_ij (f_i - f_j)``, ``B_ij = -(1/N)(z_i - z_j)^-2``."""

    positions: np.ndarray
    mask: np.ndarray
    potential: np.ndarray
    N: int
    kind: OperatorKind = OperatorKind.L

    def apply_B(self, f) -> np.ndarray:
        return laplacian_apply(self.positions, self.mask, np.asarray(f, dtype=float), 1.0 / self.N)

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.kind == OperatorKind.B:
            return self.apply_B(f)
        if self.kind == OperatorKind.V:
            return self.potential * f
        return self.apply_B(f) + self.potential * f

    def coefficients(self) -> np.ndarray:
        """The off-diagonal coefficients ``B_ij`` (zero off the interaction set)."""
        return -coupling_matrix(self.positions, self.mask, 1.0 / self.N)

    def dense(self) -> np.ndarray:
        if self.positions.size > 4000:
            raise MemoryError("dense materialization is limited to 2000 labels per side")
        W = coupling_matrix(self.positions, self.mask, 1.0 / self.N)
        out = np.zeros_like(W)
        if self.kind != OperatorKind.V:
            out = W - np.diag(W.sum(axis=1))
        if self.kind != OperatorKind.B:
            out = out + np.diag(self.potential)
        return out

    def with_kind(self, kind: OperatorKind | str) -> "DiscreteOperator":
        return DiscreteOperator(self.positions, self.mask, self.potential, self.N, OperatorKind(kind))


def build_operator(zhat: np.ndarray, sr: ShortRangeSet, drift: ShortRangeDrift | None, t: float,
                   kind: OperatorKind | str = OperatorKind.L) -> DiscreteOperator:
    """Operator at the snapshot ``zhat``; without ``drift`` the potential is zero."""
    zhat = np.asarray(zhat, dtype=float)
    V = drift.potential(zhat, t) if drift is not None else np.zeros_like(zhat)
    return DiscreteOperator(zhat, sr.mask, V, sr.N, OperatorKind(kind))


def trajectory_builder(traj: Trajectory, row: int, sr: ShortRangeSet, drift: ShortRangeDrift | None,
                       keep: np.ndarray | None = None):
    """Operators along a recorded run, positions linearly interpolated between snapshots.

    A convex combination of increasing vectors is increasing, so ordering survives.
    ``keep`` restricts the operator to a label subset (ghosts decouple to rounding level).
    """
    times = traj.times

    def builder(t: float) -> DiscreteOperator:
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        u = (t - times[k]) / (times[k + 1] - times[k])
        z = (1 - u) * traj.states[k, row] + u * traj.states[k + 1, row]
        op = build_operator(z, sr, drift, t)
        if keep is None:
            return op
        return DiscreteOperator(op.positions[keep], op.mask[np.ix_(keep, keep)], op.potential[keep], op.N, op.kind)

    return builder


@dataclass
class HeatRecord:
    times: list = field(default_factory=list)
    l1: list = field(default_factory=list)
    linf: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)


def propagate_heat(op_builder: Callable[[float], DiscreteOperator], w0, s: float, t: float,
                   rtol: float = 1e-8, atol: float = 1e-13, record_at=(), first_step: float | None = None,
                   min_step: float = 1e-15, max_steps: int = 100000) -> tuple[np.ndarray, HeatRecord]:
    """Solve ``dw/dtau = L(tau) w`` from ``s`` to ``t`` by implicit midpoint with step doubling.

    ``w0`` may be a vector or a matrix of column vectors. The error of each step
    is the Richardson difference between one full step and two half steps.
    """
    if t < s:
        raise ValueError("propagation requires s <= t")
    w = np.array(w0, dtype=float)
    rec = HeatRecord([s], [float(np.abs(w).sum(axis=0).max())], [float(np.abs(w).max())])
    stops = sorted({float(x) for x in record_at if s <= x <= t} | {t})
    for x in stops:
        if x == s:
            rec.outputs[x] = w.copy()
    if t == s:
        return w, rec
    h = first_step or (t - s) / 64
    tau = s
    scale = max(float(np.abs(w).max()), 1e-300)

    def mid_step(w, tau, h):
        A = op_builder(tau + h / 2).dense()
        n = A.shape[0]
        lhs = np.eye(n) - 0.5 * h * A
        rhs = w + 0.5 * h * (A @ w)
        return sla.solve(lhs, rhs, assume_a="gen", check_finite=False)

    steps = 0
    for stop in stops:
        if stop <= tau:
            continue
        while tau < stop:
            if steps >= max_steps:
                raise StiffnessFailure("step budget exhausted")
            h_try = min(h, stop - tau)
            if h_try < min_step * max(1.0, abs(t)):
                raise StiffnessFailure(f"step size collapsed to {h_try:.3g}")
            full = mid_step(w, tau, h_try)
            half = mid_step(mid_step(w, tau, h_try / 2), tau + h_try / 2, h_try / 2)
            err = float(np.abs(full - half).max()) / 3.0
            tol = atol * scale + rtol * float(np.abs(half).max())
            if err <= tol:
                w = half + (half - full) / 3.0
                tau = tau + h_try
                steps += 1
                rec.times.append(tau)
                rec.l1.append(float(np.abs(w).sum(axis=0).max()))
                rec.linf.append(float(np.abs(w).max()))
            fac = 0.9 * (tol / err) ** (1 / 3) if err > 0 else 4.0
            h = h_try * min(4.0, max(0.2, fac))
        rec.outputs[stop] = w.copy()
    return w, rec


@dataclass
class FiniteSpeedReport:
    source_label: int
    horizon: float
    leak: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.leak <= self.threshold


def finite_speed_check(op_builder, labels: np.ndarray, real: np.ndarray, ell: int, N: int, t: float,
                       delta: float = 0.05, threshold: float = 1e-8) -> FiniteSpeedReport:
    """Start from a delta at the real label farthest beyond the horizon and measure what reaches the centre."""
    horizon = ell**4 * N**delta
    cand = np.nonzero(real & (np.abs(labels) >= horizon))[0]
    if cand.size == 0:
        raise DomainError("no real label lies beyond the propagation horizon")
    b = cand[np.argmax(np.abs(labels[cand]))]
    w0 = np.zeros(labels.size)
    w0[b] = 1.0
    w, _ = propagate_heat(op_builder, w0, 0.0, t)
    near = np.abs(labels) <= horizon / 2
    return FiniteSpeedReport(int(labels[b]), float(horizon), float(np.abs(w[near]).max()), threshold)


@dataclass
class DecayFit:
    exponent: float
    intercept: float
    times: np.ndarray
    ratios: np.ndarray


def _ratio(U: np.ndarray, a: int, p: float) -> float:
    """``||U w0||_inf / ||w0||_p`` for the dual-optimal ``w0`` localized by row ``a``."""
    row = U[a]
    if p == 1:
        w0 = np.zeros_like(row)
        w0[np.argmax(np.abs(row))] = 1.0
    else:
        q = p / (p - 1)
        w0 = np.sign(row) * np.abs(row) ** (q - 1)
    out = U @ w0
    return float(np.abs(out).max() / np.linalg.norm(w0, ord=p))


def heat_decay_check(op_builder, p: float, trials: int, labels: np.ndarray, real: np.ndarray, N: int,
                     t_window: tuple[float, float] | None = None, points: int = 6, seed: int = 0,
                     row_window: int | None = None) -> DecayFit:
    """Fit ``log(||U(0,t) w0||_inf / ||w0||_p)`` against ``log(N^{1/2} t)``.

    The propagator is computed densely; ``w0`` is the extremal vector for a
    random row near the cusp, so the ratio realizes the ``l^p -> l^inf`` norm of that row.
    """
    if p < 1:
        raise DomainError("p must be at least 1")
    lo, hi = t_window or (N ** -0.55, N ** -0.42)
    ts = np.geomspace(lo, hi, points)
    n = labels.size
    _, rec = propagate_heat(op_builder, np.eye(n), 0.0, float(ts[-1]), record_at=ts, rtol=1e-6, atol=1e-12)
    rng = np.random.default_rng(seed)
    window = row_window or max(2, int(np.sqrt(N) / 4))
    rows = np.nonzero(real & (np.abs(labels) <= window))[0]
    picks = rng.choice(rows, size=trials, replace=trials > rows.size)
    ratios = np.array([np.mean([_ratio(rec.outputs[float(t)], a, p) for a in picks]) for t in ts])
    x = np.log(np.sqrt(N) * ts)
    slope, icpt = np.polyfit(x, np.log(ratios), 1)
    return DecayFit(float(slope), float(icpt), ts, ratios)


def sobolev_ratio(u, eta: float, tail_cut: int = 100000) -> float:
    """Quotient of the discrete fractional energy and ``||u||_p^2``, ``p = 8 / (2 + 3 eta)``.

    ``u[k]`` is the value at the positive integer ``k + 1``; the energy sums over
    ordered pairs ``i != j`` of positive integers.
    """
    if not 0 < eta <= 2 / 3:
        raise DomainError("eta must lie in (0, 2/3]")
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise ZeroVector("u vanishes identically")
    u = u / np.abs(u).max()  # the quotient is 0-homogeneous; this avoids underflow
    power = 2.0 - eta
    support = np.nonzero(u)[0] + 1
    hi = int(support.max())
    idx = np.arange(1, hi + 1)
    c = idx ** 0.75
    with np.errstate(divide="ignore"):
        kern = np.abs(c[:, None] - c[None, :]) ** -power
    np.fill_diagonal(kern, 0.0)
    inner = float(np.sum((u[:hi, None] - u[None, :hi]) ** 2 * kern))
    decay = 0.75 * power
    if decay <= 1.0:
        return np.inf  # the tail sum over j diverges
    j = np.arange(hi + 1, max(tail_cut, 2 * hi) + 1, dtype=float)
    a = j[-1] + 0.5
    outer = 0.0
    for i in support:
        ci = i ** 0.75
        s = np.sum((j ** 0.75 - ci) ** -power)
        # tail integral after x = a / v; the factor v^(decay - 2) carries the endpoint singularity
        smooth = lambda v: (1.0 - ci * (v / a) ** 0.75) ** -power  # noqa: E731
        s += a ** (1.0 - decay) * quad(smooth, 0.0, 1.0, weight="alg", wvar=(decay - 2.0, 0.0))[0]
        outer += 2.0 * u[i - 1] ** 2 * s
    p = 8.0 / (2.0 + 3.0 * eta)
    return (inner + outer) / np.sum(np.abs(u) ** p) ** (2.0 / p)
