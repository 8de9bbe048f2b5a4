import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import semicircle_m
from cuspuni.density import point_mass_profile, scdos
from cuspuni.ensembles import deformed_wigner, semicircle
from cuspuni.errors import AmbiguousWindow, BadFit, BracketInvalid
from cuspuni.flow import (CuspKind, FlowState, GapRecord, MinRecord, burgers_defect, find_cusp_time,
                          fit_slope, free_convolve, locate_features, pearcey_parameter)

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="module")
def semicircle_base():
    return scdos(semicircle(2), (-2.05, 2.05), resolution=1e-3)


@pytest.fixture(scope="module")
def two_atom_base():
    # variance 0.9 around atoms +-1: the flow closes the gap at t = 0.1
    return scdos(deformed_wigner(2, -0.1), (-3.0, 3.0), resolution=1e-3)


def two_atom_cusp_time(variance0):
    # at z = 0 the two-atom equation has m = i y with y^2 = (s - 1) / s^2; density opens at s = 1
    return brentq(lambda s: (s - 1) / s**2, 0.5, 2.0, xtol=1e-15) - variance0


def test_point_mass_flows_to_semicircle():
    m = free_convolve(point_mass_profile(0.0), 1.0, np.array([1j]))
    assert m[0] == pytest.approx(1j * (np.sqrt(5) - 1) / 2, abs=1e-10)


def test_semicircle_variances_add(semicircle_base):
    state = FlowState(semicircle_base, 1.0)
    z = np.array([0.4 + 0.3j, -1.1 + 0.05j])
    expected = semicircle_m(z / np.sqrt(2)) / np.sqrt(2)
    assert np.allclose(state.m_t(z), expected, atol=1e-8)
    edge = brentq(lambda x: state.density(np.array([x]))[0] - 1e-6, 2.5, 3.2, xtol=1e-12)
    # near the edge rho ~ sqrt(e - x) / (pi v^{3/4}), so the 1e-6 level sits about 1e-11 inside
    assert edge == pytest.approx(2 * np.sqrt(2), abs=1e-4)


def test_flow_conserves_mass(semicircle_base):
    prof = FlowState(semicircle_base, 0.5).rho_t((-3.0, 3.0), resolution=1e-3)
    assert prof.cumulative(np.array([2.99]))[0] == pytest.approx(1.0, abs=1e-4)


def test_gap_then_minimum(two_atom_base):
    before = locate_features(FlowState(two_atom_base, 0.09), (-0.05, 0.05))
    after = locate_features(FlowState(two_atom_base, 0.11), (-0.05, 0.05))
    assert isinstance(before, GapRecord) and before.delta > 0
    assert isinstance(after, MinRecord) and after.height > 0
    assert abs(before.b) < 1e-9 and abs(after.b) < 1e-6
    # leading-order sizes with slope 1
    assert before.delta == pytest.approx(4 * (0.01 / 3) ** 1.5, rel=0.25)
    assert after.height == pytest.approx(np.sqrt(0.01) / np.pi, rel=0.25)


def test_window_with_two_gaps_is_ambiguous(two_atom_base):
    with pytest.raises(AmbiguousWindow):
        locate_features(FlowState(two_atom_base, 0.0), (-5.0, 5.0))


def test_cusp_time_matches_two_atom_oracle(two_atom_base):
    rep = find_cusp_time(two_atom_base, (0.09, 0.11), (-0.05, 0.05), ttol=1e-7)
    assert rep.kind == CuspKind.EXACT
    assert rep.t_star == pytest.approx(two_atom_cusp_time(0.9), rel=1e-4)
    assert rep.gamma == pytest.approx(1.0, rel=0.02)
    assert abs(rep.b) < 1e-6


def test_precusp_bracket_is_invalid(two_atom_base):
    with pytest.raises(BracketInvalid):
        find_cusp_time(two_atom_base, (0.05, 0.08), (-0.05, 0.05))


def test_fit_slope_recovers_synthetic_gamma():
    gamma = 2.0

    def rho(x):
        return SQRT3 * gamma ** (4 / 3) * np.abs(x - 0.3) ** (1 / 3) / (2 * np.pi)

    fit = fit_slope(rho, 0.3)
    assert fit.gamma == pytest.approx(gamma, rel=1e-10)
    assert fit.exponent == pytest.approx(1 / 3, abs=1e-10)


def test_fit_slope_rejects_square_root():
    with pytest.raises(BadFit):
        fit_slope(lambda x: np.abs(x) ** 0.5, 0.0)


def test_pearcey_parameter_signs():
    assert pearcey_parameter(CuspKind.EXACT, 1.0, 100) == 0.0
    assert pearcey_parameter(CuspKind.GAP, 1.0, 100, delta=1e-3) > 0
    assert pearcey_parameter(CuspKind.MIN, 1.0, 100, height=1e-3) < 0


def test_semicircle_edge_moves_with_minus_boundary_value(semicircle_base):
    t, dt = 0.5, 1e-4

    def edge(state):
        return brentq(lambda x: state.density(np.array([x]))[0] - 1e-7, 2.2, 3.0, xtol=1e-13)

    s0 = FlowState(semicircle_base, t)
    v = (edge(FlowState(semicircle_base, t + dt)) - edge(FlowState(semicircle_base, t - dt))) / (2 * dt)
    assert v == pytest.approx(1 / np.sqrt(1 + t), rel=1e-3)
    assert v == pytest.approx(-np.real(s0.boundary_value(np.array([edge(s0)]))[0]), rel=1e-3)


def test_burgers_equation_holds(semicircle_base):
    d = burgers_defect(semicircle_base, 0.3, 1e-4, np.array([0.2 + 0.1j, 1.0 + 0.01j]))
    assert np.all(d < 1e-5)
