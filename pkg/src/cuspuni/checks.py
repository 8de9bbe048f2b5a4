"""Acceptance checks shared by the test suite and the ``check`` command."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import pearcey
from .density import scdos
from .ensembles import atomic, deformed_wigner, matched_four_atom, reference_ensemble, semicircle
from .flow import FlowState, fit_slope, locate_features
from .mc import EntryLaw, SpecDensity, compare_to_pearcey, compare_two_ensembles, cusp_report, rescale, \
    sample_many, shared_edges
from .quantiles import fluctuation_scale, interpolate, interpolation_error, quantile

CHECK_RESOLUTION = 1e-4


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict
    target: str
    seconds: float = 0.0
    budget: float = float("inf")
    within_budget: bool = field(init=False, default=True)

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        tag = "PASS" if self.passed else "FAIL"
        slow = "" if self.within_budget else " (over runtime budget)"
        return f"[{tag}] {self.number:2d} {self.name}: {vals} | target {self.target} | {self.seconds:.1f}s{slow}"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(number: int, name: str, budget: float):
    def wrap(fn):
        def run(**kw) -> CheckResult:
            t0 = time.perf_counter()
            res = fn(**kw)
            res.number, res.name, res.budget = number, name, budget
            res.seconds = time.perf_counter() - t0
            res.within_budget = res.seconds <= budget
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run
    return wrap


def _result(passed, measured, target) -> CheckResult:
    return CheckResult(0, "", bool(passed), measured, target)


def _loglog(x, y) -> tuple[float, float]:
    slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(icpt))


# ---------------------------------------------------------------------------
# density and flow


@_timed(1, "semicircle oracle", 5.0)
def check_semicircle(N: int = 1000, tol: float = 1e-4) -> CheckResult:
    prof = scdos(semicircle(N), (-2.5, 2.5), resolution=1e-6)
    rho0 = float(prof.density(np.array([0.0]))[0])
    edges = prof.edges()
    err_rho = abs(rho0 - 1 / np.pi)
    err_edge = max(abs(edges[0] + 2), abs(edges[-1] - 2)) if len(edges) == 2 else np.inf
    return _result(err_rho <= tol and err_edge <= tol, {"rho0_error": err_rho, "edge_error": err_edge},
                   f"both <= {tol:g}")


@_timed(2, "reference cusp slope", 30.0)
def check_reference_slope(N: int = 1000, tol: float = 0.02) -> CheckResult:
    fit = fit_slope(SpecDensity(reference_ensemble(N, 0.0), 0.0), 0.0)
    return _result(abs(fit.gamma - 1) <= tol, {"gamma": fit.gamma, "exponent": fit.exponent}, f"gamma = 1 +- {tol:g}")


def _precusp_base(t_star: float):
    """Two-atom model whose flow forms a slope-1 cusp at ``t_star``; the profile keeps the exact solver."""
    return scdos(deformed_wigner(2, -t_star), (-3.0, 3.0), resolution=1e-3)


@_timed(3, "gap law", 120.0)
def check_gap_law(t_star: float = 0.1, distances=(1e-5, 1e-3), points: int = 7,
                  slope_tol: float = 0.03, prefactor_tol: float = 0.10) -> CheckResult:
    base = _precusp_base(t_star)
    gamma = fit_slope(FlowState(base, t_star), 0.0).gamma
    s = np.geomspace(*distances, points)
    delta = np.array([locate_features(FlowState(base, t_star - x), (-0.05, 0.05)).delta for x in s])
    slope, pref = _loglog(s, delta)
    expected = (2 * gamma) ** 2 / 3**1.5
    ratio = pref / expected
    ok = abs(slope - 1.5) <= slope_tol and abs(ratio - 1) <= prefactor_tol
    return _result(ok, {"slope": slope, "prefactor_ratio": ratio, "gamma": gamma},
                   f"slope 1.5 +- {slope_tol:g}, prefactor within {prefactor_tol:.0%}")


@_timed(4, "minimum law", 120.0)
def check_minimum_law(t_star: float = 0.1, distances=(1e-6, 1e-4), points: int = 7,
                      slope_tol: float = 0.03, prefactor_tol: float = 0.10) -> CheckResult:
    base = _precusp_base(t_star)
    gamma = fit_slope(FlowState(base, t_star), 0.0).gamma
    s = np.geomspace(*distances, points)
    height = np.array([locate_features(FlowState(base, t_star + x), (-0.05, 0.05)).height for x in s])
    slope, pref = _loglog(s, height)
    ratio = pref / (gamma**2 / np.pi)
    ok = abs(slope - 0.5) <= slope_tol and abs(ratio - 1) <= prefactor_tol
    return _result(ok, {"slope": slope, "prefactor_ratio": ratio, "gamma": gamma},
                   f"slope 0.5 +- {slope_tol:g}, prefactor within {prefactor_tol:.0%}")


@_timed(5, "quantile exponents", 60.0)
def check_quantile_exponents(sizes=(10**7, 10**8, 10**9), indices=(10, 1000), points: int = 9,
                             tol: float = 0.02) -> CheckResult:
    """Fit ``log q = a log i + b log N + c`` for quantile offsets and fluctuation scales at the cusp."""
    prof = scdos(reference_ensemble(2, 0.0), (-0.05, 0.05), resolution=1e-8)
    idx = np.unique(np.geomspace(*indices, points).astype(int))
    rows = []
    for N in sizes:
        offs = quantile(prof, 0.0, idx, N)
        for i, x in zip(idx, offs):
            rows.append((np.log(i), np.log(N), np.log(x), np.log(fluctuation_scale(prof, x, N).eta_f)))
    r = np.array(rows)
    design = np.c_[r[:, 0], r[:, 1], np.ones(len(r))]
    q = np.linalg.lstsq(design, r[:, 2], rcond=None)[0]
    f = np.linalg.lstsq(design, r[:, 3], rcond=None)[0]
    got = {"quantile_i": q[0], "scale_i": f[0], "scale_N": f[1]}
    ok = abs(q[0] - 0.75) <= tol and abs(f[0] + 0.25) <= tol and abs(f[1] + 0.75) <= tol
    return _result(ok, got, f"3/4, -1/4, -3/4 each +- {tol:g}")


@_timed(6, "interpolation exactness", 60.0)
def check_interpolation(N: int = 200, t_star: float = 0.01, tol: float = 1e-9) -> CheckResult:
    px = scdos(deformed_wigner(N, -t_star, beta=1), (-3, 3), resolution=1e-5)
    atoms, w, v = matched_four_atom(t_star)
    py = scdos(atomic(N, atoms, w, v), (-3, 3), resolution=1e-5)
    bx = min(e for e in px.edges() if e > 0)
    by = min(e for e in py.edges() if e > 0)
    errs = [interpolation_error(interpolate(px, py, a, "gap", bx, by), N, N // 2 - 1)
            for a in (0.0, 0.25, 0.5, 0.75, 1.0)]
    return _result(max(errs) <= tol, {"max_defect": max(errs), "per_alpha": errs}, f"<= {tol:g} local spacings")


# ---------------------------------------------------------------------------
# Pearcey kernel


@_timed(7, "Pearcey kernel", 120.0)
def check_pearcey(shift_tol: float = 1e-8, det_tol: float = 1e-10, asym_tol: float = 0.03) -> CheckResult:
    shift = max(pearcey.shift_invariance_check(a, b, x, y, (0.05, 0.1, 0.2))
                for a, b, x, y in ((0.0, 0.0, 0.3, -0.7), (-1.0, 1.0, 0.0, 0.5), (1.0, 0.5, 1.5, -1.0)))
    det = max(abs(pearcey.kpoint([a, a], [x, x])) for a in (0.0, -1.0, 2.0) for x in (-1.3, 0.0, 0.7))
    asym = [2 * np.pi * float(pearcey.density(np.array([x]))[0]) / (np.sqrt(3) * abs(x) ** (1 / 3))
            for x in (-8.0, 8.0)]
    dev = max(abs(a - 1) for a in asym)
    ok = shift <= shift_tol and det <= det_tol and dev <= asym_tol
    return _result(ok, {"shift_defect": shift, "coincident_det": det, "asymptotic_ratio": asym},
                   f"shift <= {shift_tol:g}, det <= {det_tol:g}, ratio within {asym_tol:.0%}")


# ---------------------------------------------------------------------------
# Monte Carlo


@_timed(8, "complex cusp universality", 1800.0)
def check_gue_universality(N: int = 1000, seeds: int = 200, workers: int = 1, tol_sigma: float = 3.0):
    spec = deformed_wigner(N, 0.0, beta=2)
    cusp = cusp_report(spec)
    recs = sample_many(spec, range(seeds), cusp=cusp, workers=workers)
    rep = compare_to_pearcey(rescale(recs, cusp, 3.0), cusp.alpha_pearcey, tol_sigma)
    return _result(rep.passed, {"max_abs_z": rep.max_abs_z, "chi2_p": rep.p_value, "bins": rep.z.size},
                   f"max|z| <= {tol_sigma:g} and chi2 p > 0.01")


@_timed(9, "real cross-ensemble universality", 1800.0)
def check_goe_cross(N: int = 1000, seeds: int = 200, workers: int = 1) -> CheckResult:
    """Gaussian reference ensemble against a Bernoulli four-atom model with the same slope."""
    ref = reference_ensemble(N, 0.0, beta=1)
    atoms, w, v = matched_four_atom(0.0)
    mix = atomic(N, atoms, w, v, beta=1)
    cr, cm = cusp_report(ref), cusp_report(mix)
    ra = sample_many(ref, range(seeds), cusp=cr, workers=workers)
    rb = sample_many(mix, range(10**6, 10**6 + seeds), law=EntryLaw.BERNOULLI, cusp=cm, workers=workers)
    a, b = shared_edges(rescale(ra, cr, 3.0), rescale(rb, cm, 3.0))
    rep = compare_two_ensembles(a, b)
    return _result(rep.ks_p_value > 0.01, {"ks_p": rep.ks_p_value, "ks_stat": rep.ks_statistic,
                                           "gamma_ref": cr.gamma, "gamma_mix": cm.gamma}, "KS p > 0.01")


# ---------------------------------------------------------------------------
# Dyson Brownian motion


@lru_cache(maxsize=4)
def scenario(N: int, resolution: float = CHECK_RESOLUTION):
    from .dbm.scenario import ScenarioConfig, build_scenario
    cfg = ScenarioConfig(N, resolution=resolution)
    return cfg, build_scenario(cfg)


@lru_cache(maxsize=4)
def short_range_run(N: int, seed: int = 3, snapshots: int = 21, resolution: float = CHECK_RESOLUTION):
    from .dbm.shortrange import ShortRangeDrift, ShortRangeSet, run_short_range
    cfg, st = scenario(N, resolution)
    sr = ShortRangeSet(N)
    drift = ShortRangeDrift(st, sr)
    traj = run_short_range(st, sr, cfg.t_end, seed=seed, snapshots=snapshots)
    return cfg, st, sr, drift, traj


def _real_builder(N: int):
    from .dbm.operators import trajectory_builder
    cfg, st, sr, drift, traj = short_range_run(N)
    return cfg, st, sr, trajectory_builder(traj, 1, sr, drift, keep=st.real), st.labels[st.real]


@_timed(10, "short-long closeness", 600.0)
def check_short_long(N: int = 200, factor: float = 5.0) -> CheckResult:
    _, st, _, _, traj = short_range_run(N)
    gap = float(np.abs(traj.states[:, 0, st.real] - traj.states[:, 1, st.real]).max())
    bound = factor * N**-0.75
    return _result(gap <= bound, {"sup_difference": gap, "bound": bound}, f"<= {factor:g} N^-3/4")


@_timed(11, "finite speed of propagation", 300.0)
def check_finite_speed(N: int = 400, threshold: float = 1e-8) -> CheckResult:
    from .dbm.operators import finite_speed_check
    cfg, st, sr, builder, labels = _real_builder(N)
    rep = finite_speed_check(builder, labels, np.ones(labels.size, bool), sr.ell, N, cfg.t_end,
                             threshold=threshold)
    return _result(rep.passed, {"leak": rep.leak, "source_label": rep.source_label, "horizon": rep.horizon},
                   f"leak <= {threshold:g}")


@_timed(12, "heat kernel decay", 600.0)
def check_heat_decay(N: int = 400, p: float = 5.0, trials: int = 20, target: float = -0.40,
                     tol: float = 0.08) -> CheckResult:
    from .dbm.operators import heat_decay_check
    _, _, _, builder, labels = _real_builder(N)
    fit = heat_decay_check(builder, p, trials, labels, np.ones(labels.size, bool), N)
    return _result(abs(fit.exponent - target) <= tol, {"exponent": fit.exponent, "ratios": fit.ratios},
                   f"{target:g} +- {tol:g}")


@_timed(13, "operator structure", 60.0)
def check_operator_structure(N: int = 400, vectors: int = 100, seed: int = 0, tol: float = 1e-14) -> CheckResult:
    from .dbm.operators import build_operator
    _, _, sr, drift, traj = short_range_run(N)
    op = build_operator(traj.states[-1, 1], sr, drift, float(traj.times[-1]))
    const = float(np.abs(op.apply_B(np.ones(op.positions.size))).max())
    rng = np.random.default_rng(seed)
    forms = [float(f @ op.apply_B(f)) for f in rng.standard_normal((vectors, op.positions.size))]
    vmax = float(op.potential.max())
    sym = float(np.abs(op.coefficients() - op.coefficients().T).max())
    ok = const <= tol and max(forms) <= 0 and vmax <= 0 and sym == 0
    return _result(ok, {"B_on_constants": const, "max_form": max(forms), "max_potential": vmax,
                        "asymmetry": sym}, f"B1 <= {tol:g}, forms <= 0, V <= 0")


@_timed(14, "rigidity exponent", 1200.0)
def check_rigidity(sizes=(100, 200, 400), seeds: int = 24, target: float = -0.75, tol: float = 0.08):
    from .dbm.shortrange import run_interpolated
    means = []
    for N in sizes:
        cfg, st = scenario(N)
        means.append(np.mean([run_interpolated(st, cfg.t_end, seed=s).rigidity.max() for s in range(seeds)]))
    slope, _ = _loglog(np.array(sizes, float), np.array(means))
    return _result(abs(slope - target) <= tol, {"exponent": slope, "mean_max_deviation": means},
                   f"{target:g} +- {tol:g}")


CHECKS = {f.number: f for f in (check_semicircle, check_reference_slope, check_gap_law, check_minimum_law,
                                check_quantile_exponents, check_interpolation, check_pearcey,
                                check_gue_universality, check_goe_cross, check_short_long, check_finite_speed,
                                check_heat_decay, check_operator_structure, check_rigidity)}


def run_checks(numbers=None, **overrides) -> list[CheckResult]:
    """Run the selected checks; ``overrides`` maps check number to keyword arguments."""
    out = []
    for n in sorted(numbers or CHECKS):
        out.append(CHECKS[n](**overrides.get(n, {})))
    return out
