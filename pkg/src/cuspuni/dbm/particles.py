"""Ordered particle systems, neighbour-implicit stepping with recursive halving, and ghost padding."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from scipy.linalg import solveh_banded

from ..errors import CollisionUnresolved, IndexMismatch, NoConvergence
from .kernels import pair_drift
from .noise import BrownianSource

MAX_HALVINGS = 30
DT_GAP_FRACTION = 0.1
GHOST_FACTOR = 1e6


class Variant(str, Enum):
    PLAIN = "plain"
    PADDED_X = "padded_x"
    PADDED_Y = "padded_y"
    INTERPOLATED = "interpolated"
    SHORT_RANGE = "short_range"


def padded_labels(N: int) -> np.ndarray:
    return np.concatenate([np.arange(-N, 0), np.arange(1, N + 1)])


@dataclass
class ParticleSystem:
    """Ordered particles with labels; ``slots`` index the shared Brownian vector."""

    positions: np.ndarray
    labels: np.ndarray
    N: int
    t: float = 0.0
    variant: Variant = Variant.PLAIN
    alpha: float | None = None
    source: BrownianSource | None = None
    slots: np.ndarray | None = None
    steps_taken: int = 0
    noise_log: list | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.slots is None:
            self.slots = np.arange(self.positions.size)
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly increasing")

    def copy(self, **kw) -> "ParticleSystem":
        base = dict(positions=self.positions.copy(), labels=self.labels.copy(),
                    slots=self.slots.copy(),
                    noise_log=None if self.noise_log is None else list(self.noise_log))
        base.update(kw)
        return replace(self, **base)


def _ordered(z: np.ndarray) -> bool:
    """Every row of a (processes, particles) stack is strictly increasing."""
    return bool(np.all(np.diff(z, axis=-1) > 0))


def neighbor_drift(z: np.ndarray, scale: float) -> np.ndarray:
    """Nearest-neighbour part of the pair drift, row by row."""
    inv = 1.0 / np.diff(z, axis=-1)
    out = np.zeros_like(z)
    out[..., 1:] += inv
    out[..., :-1] -= inv
    return scale * out


def _barrier_row(y, start, c, max_iter):
    x = start.copy()
    n = x.size
    ab = np.empty((2, n))
    for _ in range(max_iter):
        g = np.diff(x)
        inv = 1.0 / g
        grad = x - y - c * (np.concatenate([[0.0], inv]) - np.concatenate([inv, [0.0]]))
        inv2 = c * inv**2
        ab[1] = 1.0 + np.concatenate([[0.0], inv2]) + np.concatenate([inv2, [0.0]])
        ab[0, 0] = 0.0
        ab[0, 1:] = -inv2
        dx = solveh_banded(ab, -grad, check_finite=False)
        shrink = np.diff(dx)
        lam = 1.0
        closing = shrink < 0
        if closing.any():
            lam = min(1.0, 0.9 * float(np.min(g[closing] / -shrink[closing])))
        x = x + lam * dx
        if lam == 1.0 and np.max(np.abs(dx)) <= 1e-15 * max(1.0, float(np.max(np.abs(x)))):
            return x
    if not np.all(np.diff(x) > 0):
        raise NoConvergence("implicit neighbour solve left the ordered cone")
    return x


def implicit_neighbors(y: np.ndarray, start: np.ndarray, c: float, max_iter: int = 60) -> np.ndarray:
    """Minimize ``|x - y|^2 / 2 - c sum log(x_{k+1} - x_k)`` row by row.

    This is the implicit nearest-neighbour repulsion step: the minimizer exists
    for every ``y`` and is strictly ordered. Newton iterations start from ``y``
    when it is ordered and from the ordered ``start`` otherwise.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] < 2:
        return y.copy()
    out = np.empty_like(y)
    for idx in np.ndindex(y.shape[:-1]):
        row = y[idx]
        x0 = row if np.all(np.diff(row) > 0) else np.asarray(start)[idx]
        out[idx] = _barrier_row(row, x0, c, max_iter)
    return out


def advance(z, t, dt, drift, source, slots, N, address, log=None, depth=0):
    """One step of a stack of processes sharing the Brownian increments.

    Drift-implicit in the nearest-neighbour repulsion, explicit (Euler-Maruyama)
    in everything else. ``drift(z, t)`` returns the full drift for the stack.
    On an ordering violation the step is replaced by two half steps, recursively.
    """
    segment, step, path = address
    dB = source.increment(segment, step, path, dt)[slots]
    explicit = z + (drift(z, t) - neighbor_drift(z, 1.0 / N)) * dt + np.sqrt(2.0 / N) * dB
    new = implicit_neighbors(explicit, z, dt / N)
    if _ordered(new):
        if log is not None:
            log.append((segment, step, path, dt))
        return new
    if depth >= MAX_HALVINGS:
        raise CollisionUnresolved(f"ordering still violated after {MAX_HALVINGS} halvings")
    mid = advance(z, t, dt / 2, drift, source, slots, N, (segment, step, path + (0,)), log, depth + 1)
    return advance(mid, t + dt / 2, dt / 2, drift, source, slots, N, (segment, step, path + (1,)),
                   log, depth + 1)


def dyson_drift(N: int, extra: Callable[[float], float] | None = None):
    """Drift of plain Dyson Brownian motion plus an index-independent term."""
    def drift(z, t):
        out = np.stack([pair_drift(row, 1.0 / N) for row in np.atleast_2d(z)]).reshape(z.shape)
        return out + (extra(t) if extra is not None else 0.0)
    return drift


def step(system: ParticleSystem, dt: float, drift_extra: Callable[[float], float] | None = None,
         zero_noise: bool = False) -> ParticleSystem:
    """Single step of ``dz_i = sqrt(2/N) dB_i + (1/N) sum 1/(z_i-z_j) dt + extra(t) dt``, see ``advance``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    size = int(system.slots.max()) + 1
    if zero_noise:
        source = BrownianSource(0, size, zero=True)
    else:
        source = system.source or BrownianSource(0, size)
    log = system.noise_log
    z = advance(system.positions, system.t, dt, dyson_drift(system.N, drift_extra), source,
                system.slots, system.N, (0, system.steps_taken, ()), log)
    return system.copy(positions=z, t=system.t + dt, steps_taken=system.steps_taken + 1)


def stable_dt(z: np.ndarray, N: int, fraction: float = DT_GAP_FRACTION, cap: float = np.inf) -> float:
    """Largest step with ``max|pair drift| * dt <= fraction * min gap``."""
    z = np.atleast_2d(z)
    gap = float(np.min(np.diff(z, axis=-1)))
    d = max(float(np.max(np.abs(pair_drift(row, 1.0 / N)))) for row in z)
    return float(min(fraction * gap / max(d, 1e-300), cap))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray          # (snapshots, processes, particles)
    labels: np.ndarray
    dt: float
    log: list | None = field(default=None, repr=False)


def integrate(z0, times: Sequence[float], drift, source: BrownianSource, slots, N: int, dt: float,
              labels=None, keep_log: bool = False) -> Trajectory:
    """Evolve a stack of coupled processes and record it at ``times`` (``times[0]`` is the start).

    Segment ``k`` between consecutive record times is split into equal steps
    no longer than ``dt``; noise is addressed by ``(k, step)``.
    """
    times = np.asarray(times, dtype=float)
    z = np.array(z0, dtype=float)
    states = [z.copy()]
    log = [] if keep_log else None
    h_used = dt
    for k in range(1, times.size):
        span = times[k] - times[k - 1]
        n = max(1, int(np.ceil(span / dt - 1e-9)))
        h = span / n
        h_used = min(h_used, h)
        for j in range(n):
            z = advance(z, times[k - 1] + j * h, h, drift, source, slots, N, (k, j, ()), log)
        states.append(z.copy())
    if labels is None:
        labels = np.arange(np.shape(z)[-1])
    return Trajectory(times, np.array(states), np.asarray(labels), h_used, log)


def default_ghost_offset(*eigs) -> float:
    allv = np.concatenate([np.asarray(e, dtype=float) for e in eigs])
    return GHOST_FACTOR * max(float(allv.max() - allv.min()), 1.0)


def pad(eigs, i_band: int, N: int, ghost_offset: float) -> np.ndarray:
    """Embed ``N`` sorted values into 2N labels ``[-N, N] \\ {0}`` with ghosts far away."""
    lam = np.sort(np.asarray(eigs, dtype=float))
    if lam.size != N:
        raise IndexMismatch(f"expected {N} values, got {lam.size}")
    if not 1 <= i_band <= N + 1:
        raise IndexMismatch(f"band index {i_band} outside [1, {N + 1}]")
    if np.max(np.abs(lam)) >= ghost_offset / 2:
        raise IndexMismatch("ghost offset does not separate ghosts from real particles")
    out = np.empty(2 * N)
    labels = padded_labels(N)
    for pos, i in enumerate(labels):
        if i <= -i_band:
            out[pos] = -ghost_offset + i * N
        elif i < 0:
            out[pos] = lam[i + i_band - 1]          # lambda_{i + i_band}, 1-based
        elif i <= N + 1 - i_band:
            out[pos] = lam[i + i_band - 2]          # lambda_{i + i_band - 1}, 1-based
        else:
            out[pos] = ghost_offset + i * N
    return out


def real_mask(N: int, i_band: int) -> np.ndarray:
    labels = padded_labels(N)
    return (labels > -i_band) & (labels <= N + 1 - i_band)


def pad_and_couple(eigs_x, eigs_y, i_lambda: int, i_mu: int, ghost_offset: float | None = None,
                   seed: int = 0, zero_noise: bool = False):
    """Two padded systems whose label ``i`` particles share the Brownian motion ``B_i``."""
    eigs_x = np.asarray(eigs_x, dtype=float)
    eigs_y = np.asarray(eigs_y, dtype=float)
    if eigs_x.size != eigs_y.size:
        raise IndexMismatch("coupled spectra must have the same size")
    N = eigs_x.size
    if ghost_offset is None:
        ghost_offset = default_ghost_offset(eigs_x, eigs_y)
    source = BrownianSource(seed, 2 * N, zero=zero_noise)
    labels = padded_labels(N)
    x = ParticleSystem(pad(eigs_x, i_lambda, N, ghost_offset), labels, N, variant=Variant.PADDED_X,
                       source=source)
    y = ParticleSystem(pad(eigs_y, i_mu, N, ghost_offset), labels, N, variant=Variant.PADDED_Y,
                       source=source)
    return x, y
