import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspuni.dbm.particles import padded_labels
from cuspuni.dbm.scenario import ScenarioConfig, build_scenario, scenario_flows
from cuspuni.dbm.shifts import Regime, build_shifts
from cuspuni.dbm.shortrange import (ExponentConfig, ShortRangeSet, label_mass_bounds, run_interpolated,
                                    run_short_range)
from cuspuni.errors import KindMismatch, RangeError

N_SMALL = 60


@pytest.fixture(scope="module")
def small_scenario():
    cfg = ScenarioConfig(N_SMALL, resolution=1e-3)
    flows = scenario_flows(cfg)
    st0 = build_scenario(cfg, flows)
    return cfg, flows, st0


def test_label_mass_intervals_tile():
    lo, hi = label_mass_bounds(padded_labels(4))
    assert list(lo) == [-4, -3, -2, -1, 0, 1, 2, 3]
    assert np.array_equal(hi - lo, np.ones(8, int))


@settings(max_examples=20)
@given(st.integers(20, 160), st.floats(0.05, 0.15), st.floats(0.0, 0.1))
def test_short_range_set_structure(N, omega_1, gap):
    cfg = ExponentConfig(omega_1=omega_1, omega_ell=omega_1 + 0.05 + gap, omega_A=omega_1 + 0.1 + 2 * gap)
    sr = ShortRangeSet(N, cfg)
    m = sr.mask
    assert np.array_equal(m, m.T)
    assert not m.diagonal().any()
    assert sr.rows_are_intervals()
    L = sr.labels
    # nearest neighbours always interact
    assert np.all(m[np.arange(L.size - 1), np.arange(1, L.size)])


def test_exponent_ordering_is_enforced():
    with pytest.raises(RangeError):
        ShortRangeSet(100, ExponentConfig(omega_1=0.1, omega_ell=0.12, omega_A=0.3))
    with pytest.raises(RangeError):
        ShortRangeSet(100, ExponentConfig(c_star=0.0))


def test_huge_range_covers_everything():
    assert ShortRangeSet(50, ell=1000).covers_everything
    assert not ShortRangeSet(2000).covers_everything


def test_shift_endpoints_have_no_correction(small_scenario):
    cfg, _, st0 = small_scenario
    for alpha, side in ((0.0, "y"), (1.0, "x")):
        sh = build_shifts(st0.tables, alpha)
        assert np.all(sh.h_values == 0.0)
        for t in sh.times:
            assert sh.phi_alpha(t) == pytest.approx(sh.anchor(side, t), abs=1e-14)
    with pytest.raises(KindMismatch):
        st0.shifts.psi_alpha(0.0)


def test_shift_matches_interpolated_boundary_value(small_scenario):
    cfg, _, st0 = small_scenario
    sh = st0.shifts
    ts = np.linspace(sh.times[0], sh.times[-1], 9)
    assert max(abs(sh.phi_alpha(t) - sh.mbar(t)) for t in ts) <= 10 / cfg.N
    assert sh.H(sh.times[0]) == pytest.approx(0.0, abs=1e-15)


def test_alpha_zero_run_is_the_y_process(small_scenario):
    cfg, flows, st0 = small_scenario
    y_state = build_scenario(ScenarioConfig(N_SMALL, alpha=0.0, resolution=1e-3), flows, st0.tables)
    a = run_interpolated(y_state, cfg.t_end, seed=4, snapshots=3)
    b = run_interpolated(y_state, cfg.t_end, seed=4, snapshots=3)
    assert np.array_equal(a.trajectory.states, b.trajectory.states)
    # the trailing quantiles at alpha = 0 are the y quantiles
    L = y_state.labels[y_state.real]
    from cuspuni.dbm.shifts import bary_eval
    qy = np.array([y_state.tables.y.flow.at(t).offsets(np.where(L > 0, (L - 0.5) / N_SMALL, (L + 0.5) / N_SMALL))
                   for t in y_state.tables.y.times])
    assert np.allclose(a.trajectory.states[0, 0, y_state.real], bary_eval(y_state.tables.y.times, qy, 0.0),
                       atol=1e-14)


def test_short_range_run_starts_shared_and_stays_close(small_scenario):
    cfg, _, st0 = small_scenario
    sr = ShortRangeSet(N_SMALL)
    traj = run_short_range(st0, sr, cfg.t_end, seed=2, snapshots=5)
    assert np.array_equal(traj.states[0, 0], traj.states[0, 1])
    diff = np.abs(traj.states[:, 0, st0.real] - traj.states[:, 1, st0.real]).max()
    assert diff <= 5 * N_SMALL**-0.75
    assert np.all(np.diff(traj.states[:, 1], axis=-1) > 0)


def test_full_interaction_set_reproduces_the_long_range_process(small_scenario):
    cfg, flows, st0 = small_scenario
    y_state = build_scenario(ScenarioConfig(N_SMALL, alpha=0.0, resolution=1e-3), flows, st0.tables)
    traj = run_short_range(y_state, ShortRangeSet(N_SMALL, ell=10**4), cfg.t_end, seed=2, snapshots=3)
    scale = np.abs(traj.states[:, 0, y_state.real]).max()
    assert np.max(np.abs(traj.states[:, 0] - traj.states[:, 1])) <= 1e-12 * max(scale, 1.0)


def test_zero_noise_run_is_deterministic(small_scenario):
    cfg, _, st0 = small_scenario
    a = run_interpolated(st0, cfg.t_end, seed=1, snapshots=3, zero_noise=True)
    b = run_interpolated(st0, cfg.t_end, seed=99, snapshots=3, zero_noise=True)
    assert np.array_equal(a.trajectory.states, b.trajectory.states)
    assert a.rigidity.max() <= 20 * N_SMALL**-0.75


@pytest.mark.slow
def test_min_regime_scenario_builds():
    cfg = ScenarioConfig(N_SMALL, regime=Regime.MIN, resolution=1e-3)
    st_min = build_scenario(cfg)
    assert st_min.shifts.regime == Regime.MIN
    assert np.isfinite(st_min.shifts.psi_alpha(st_min.shifts.times[0]))
