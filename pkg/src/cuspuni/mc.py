"""Monte Carlo sampling of Wigner-type matrices and cusp-scale eigenvalue statistics."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats as sps

from . import pearcey
from .density import DysonSolver, EnsembleSpec
from .errors import EigenFailure, EmptyWindow
from .flow import CuspKind, CuspReport, FlowConfig, GapRecord, MinRecord, fit_slope, locate_features, \
    pearcey_parameter
from .dbm.shifts import flowed_spec

MIN_BIN_COUNT = 30
EXACT_ALPHA = 1e-6
SEED_MASK = (1 << 64) - 1


class EntryLaw(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator for ``(seed, tags)``; distinct tag tuples never share a stream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & SEED_MASK, *map(int, tags)]))


def _entries(rng: np.random.Generator, shape, law: EntryLaw, beta: int) -> np.ndarray:
    """Centered unit-variance entries (complex ones have ``E|w|^2 = 1``)."""
    if law == EntryLaw.GAUSSIAN:
        re = rng.standard_normal(shape)
        if beta == 1:
            return re
        return (re + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    re = rng.choice(np.array([-1.0, 1.0]), size=shape)
    if beta == 1:
        return re
    return (re + 1j * rng.choice(np.array([-1.0, 1.0]), size=shape)) / np.sqrt(2)


def wigner_part(S: np.ndarray, rng: np.random.Generator, law: EntryLaw, beta: int) -> np.ndarray:
    """Hermitian noise with ``E|w_ij|^2 = s_ij`` off the diagonal and diagonal variance ``2 s_ii / beta``."""
    N = S.shape[0]
    X = _entries(rng, (N, N), law, beta)
    upper = np.triu(X, 1) * np.sqrt(S)
    diag = np.real(np.diag(_entries(rng, (N, N), law, 1))) * np.sqrt(2.0 * np.diag(S) / beta)
    return upper + upper.conj().T + np.diag(diag)


def sample_matrix(spec: EnsembleSpec, seed: int, t_gauss: float = 0.0,
                  law: EntryLaw | str = EntryLaw.GAUSSIAN) -> np.ndarray:
    """``diag(a) + W + sqrt(t_gauss) G`` with ``G`` a standard Gaussian ensemble of the same symmetry."""
    law = EntryLaw(law)
    N = spec.N
    H = np.diag(spec.a).astype(complex if spec.beta == 2 else float)
    H = H + wigner_part(spec.variance_matrix(), stream(seed, 0), law, spec.beta)
    if t_gauss > 0:
        H = H + np.sqrt(t_gauss) * wigner_part(np.full((N, N), 1.0 / N), stream(seed, 1), EntryLaw.GAUSSIAN,
                                               spec.beta)
    return H


def eigenvalues(H: np.ndarray) -> np.ndarray:
    try:
        ev = np.linalg.eigvalsh(H)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(ev)):
        raise EigenFailure("eigensolver returned non-finite values")
    return ev


@dataclass
class RunRecord:
    spec: EnsembleSpec
    seed: int
    t_gauss: float
    eigenvalues: np.ndarray
    law: EntryLaw = EntryLaw.GAUSSIAN
    cusp: CuspReport | None = None


def sample(spec: EnsembleSpec, seed: int, t_gauss: float = 0.0, law: EntryLaw | str = EntryLaw.GAUSSIAN,
           cusp: CuspReport | None = None) -> RunRecord:
    return RunRecord(spec, int(seed), float(t_gauss), eigenvalues(sample_matrix(spec, seed, t_gauss, law)),
                     EntryLaw(law), cusp)


def _sample_args(args):
    return sample(*args)


def sample_many(spec: EnsembleSpec, seeds, t_gauss: float = 0.0, law: EntryLaw | str = EntryLaw.GAUSSIAN,
                cusp: CuspReport | None = None, workers: int = 1) -> list[RunRecord]:
    """Independent samples; with ``workers > 1`` seeds are spread over processes."""
    jobs = [(spec, s, t_gauss, law, cusp) for s in seeds]
    if workers <= 1:
        return [_sample_args(j) for j in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_sample_args, jobs))


def multi_time_snapshot(record: RunRecord, taus, seed: int) -> list[RunRecord]:
    """Spectra of ``H + sqrt(tau_1) G_1``, then successive independent increments up to each ``tau_k``."""
    taus = np.asarray(taus, dtype=float)
    if np.any(np.diff(taus) < 0) or np.any(taus < 0):
        raise ValueError("taus must be nonnegative and nondecreasing")
    spec = record.spec
    N = spec.N
    H = sample_matrix(spec, record.seed, record.t_gauss, record.law)
    flat = np.full((N, N), 1.0 / N)
    out, prev = [], 0.0
    for k, tau in enumerate(taus):
        if tau > prev:
            H = H + np.sqrt(tau - prev) * wigner_part(flat, stream(seed, 2, k), EntryLaw.GAUSSIAN, spec.beta)
        prev = tau
        out.append(RunRecord(spec, record.seed, record.t_gauss + tau, eigenvalues(H), record.law, record.cusp))
    return out


# ---------------------------------------------------------------------------
# deterministic centering


class SpecDensity:
    """Density of a diagonal-expectation ensemble after adding a Gaussian part of variance ``t``."""

    def __init__(self, spec: EnsembleSpec, t: float):
        self.t = t
        self.config = FlowConfig()
        self._solver = DysonSolver(flowed_spec(spec, t))

    def density(self, E):
        return self._solver.density(np.atleast_1d(np.asarray(E, dtype=float)), eta_min=1e-12)


def cusp_report(spec: EnsembleSpec, window=(-0.5, 0.5), t: float = 0.0, gamma: float | None = None) -> CuspReport:
    """Centering point, slope and Pearcey parameter from the self-consistent density.

    ``gamma`` defaults to a slope fit around the feature, which needs a nonzero
    density there; pass it explicitly for a gap. Features with ``|alpha| <
    EXACT_ALPHA`` are reported as exact cusps: the density evaluation floor
    leaves a residual minimum of order ``1e-5`` at an exact cusp.
    """
    state = SpecDensity(spec, t)
    feature = locate_features(state, window)
    N = spec.N
    g = gamma if gamma is not None else fit_slope(state, feature.b).gamma
    if isinstance(feature, GapRecord):
        kind, a = CuspKind.GAP, pearcey_parameter(CuspKind.GAP, g, N, delta=feature.delta)
    elif isinstance(feature, MinRecord):
        kind, a = CuspKind.MIN, pearcey_parameter(CuspKind.MIN, g, N, height=feature.height)
    else:
        kind, a = CuspKind.EXACT, 0.0
    if abs(a) < EXACT_ALPHA:
        return CuspReport(CuspKind.EXACT, feature.b, g, alpha_pearcey=0.0)
    return CuspReport(kind, feature.b, g, alpha_pearcey=a, delta=getattr(feature, "delta", 0.0),
                      height=getattr(feature, "height", 0.0))


# ---------------------------------------------------------------------------
# statistics


@dataclass
class RescaledStatistics:
    samples: np.ndarray
    edges: np.ndarray
    counts: np.ndarray
    records: int
    beta: int
    kpoint: np.ndarray | None = field(default=None, repr=False)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        """Expected number of points per unit length and per matrix."""
        return self.counts / (self.records * self.widths)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.counts) / (self.records * self.widths)


def rescaled_points(ev: np.ndarray, cusp: CuspReport, N: int) -> np.ndarray:
    return cusp.gamma * N ** 0.75 * (np.asarray(ev) - cusp.b)


def rescale(records: list[RunRecord], cusp: CuspReport, window: float = 3.0, bins: int | None = None,
            pairs: bool = False, pair_bins: int = 6) -> RescaledStatistics:
    """Pool ``gamma N^{3/4} (lambda - b)`` inside ``[-window, window]`` and histogram it.

    By default the bin count keeps at least ``MIN_BIN_COUNT`` points per bin on average.
    """
    if not records:
        raise EmptyWindow("no records")
    N = records[0].spec.N
    per = [rescaled_points(r.eigenvalues, cusp, N) for r in records]
    per = [x[np.abs(x) <= window] for x in per]
    pooled = np.concatenate(per)
    if pooled.size == 0:
        raise EmptyWindow("no rescaled eigenvalues inside the window")
    nb = bins or max(1, pooled.size // MIN_BIN_COUNT)
    edges = np.linspace(-window, window, nb + 1)
    counts = np.histogram(pooled, edges)[0]
    kp = None
    if pairs:
        pe = np.linspace(-window, window, pair_bins + 1)
        kp = np.zeros((pair_bins, pair_bins))
        for x in per:
            X1, X2 = np.meshgrid(x, x, indexing="ij")
            off = ~np.eye(x.size, dtype=bool)
            kp += np.histogram2d(X1[off], X2[off], [pe, pe])[0]
        kp /= len(records) * np.diff(pe)[0] ** 2
    return RescaledStatistics(pooled, edges, counts, len(records), records[0].spec.beta, kp)


@dataclass
class ComparisonReport:
    z: np.ndarray
    max_abs_z: float
    chi2: float
    dof: int
    p_value: float
    tol_sigma: float
    ks_statistic: float = float("nan")
    ks_p_value: float = float("nan")
    model: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        ok = self.max_abs_z <= self.tol_sigma and self.p_value > 0.01
        if np.isfinite(self.ks_p_value):
            ok = ok and self.ks_p_value > 0.01
        return bool(ok)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def pearcey_bin_mass(edges: np.ndarray, alpha: float, tol: float = 1e-9) -> np.ndarray:
    """``int K_{alpha,alpha}(x, x) dx`` over each bin."""
    a, b = edges[:-1], edges[1:]
    x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * _GL_X[None, :]
    vals = pearcey.density(x.ravel(), alpha, tol=tol).reshape(x.shape)
    return 0.5 * (b - a) * (vals @ _GL_W)


def compare_to_pearcey(st: RescaledStatistics, alpha: float, tol_sigma: float = 3.0) -> ComparisonReport:
    """Per-bin z-scores of the counts against the Pearcey one-point density; chi-square with bins-1 dof."""
    expected = st.records * pearcey_bin_mass(st.edges, alpha)
    z = (st.counts - expected) / np.sqrt(expected)
    chi2 = float(np.sum(z**2))
    dof = max(1, z.size - 1)
    return ComparisonReport(z, float(np.max(np.abs(z))), chi2, dof, float(sps.chi2.sf(chi2, dof)), tol_sigma,
                            model=expected / (st.records * st.widths))


def compare_two_ensembles(a: RescaledStatistics, b: RescaledStatistics, tol_sigma: float = 3.0) -> ComparisonReport:
    """Two-sample per-bin z-scores of the per-matrix densities and a two-sample KS test on pooled points."""
    if not np.array_equal(a.edges, b.edges):
        raise ValueError("statistics must share bin edges")
    da, db = a.counts / a.records, b.counts / b.records
    var = a.counts / a.records**2 + b.counts / b.records**2
    z = np.where(var > 0, (da - db) / np.sqrt(np.where(var > 0, var, 1.0)), 0.0)
    chi2 = float(np.sum(z**2))
    dof = max(1, z.size - 1)
    ks = sps.ks_2samp(a.samples, b.samples)
    return ComparisonReport(z, float(np.max(np.abs(z))), chi2, dof, float(sps.chi2.sf(chi2, dof)), tol_sigma,
                            float(ks.statistic), float(ks.pvalue))


def shared_edges(*stats_list: RescaledStatistics) -> list[RescaledStatistics]:
    """Re-bin several statistics on common edges sized by the smallest sample."""
    window = float(stats_list[0].edges[-1])
    n = min(s.samples.size for s in stats_list)
    edges = np.linspace(-window, window, max(1, n // MIN_BIN_COUNT) + 1)
    return [RescaledStatistics(s.samples, edges, np.histogram(s.samples, edges)[0], s.records, s.beta)
            for s in stats_list]
