"""Acceptance criteria, one test each, with every tolerance pinned here.

Each test prints its PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""
import pytest

from conftest import ACCEPTANCE_LINES
from cuspuni import checks

pytestmark = pytest.mark.slow


def verdict(res):
    print(res.line())
    ACCEPTANCE_LINES.append((res.number, res.line()))
    assert res.passed, res.line()
    assert res.within_budget, f"over runtime budget {res.budget:g}s: {res.line()}"


def test_01_semicircle_oracle():
    verdict(checks.check_semicircle(N=1000, tol=1e-4))


def test_02_reference_cusp_slope():
    verdict(checks.check_reference_slope(N=1000, tol=0.02))


def test_03_gap_law():
    verdict(checks.check_gap_law(slope_tol=0.03, prefactor_tol=0.10))


def test_04_minimum_law():
    verdict(checks.check_minimum_law(slope_tol=0.03, prefactor_tol=0.10))


def test_05_quantile_exponents():
    verdict(checks.check_quantile_exponents(tol=0.02))


def test_06_interpolation_exactness():
    verdict(checks.check_interpolation(tol=1e-9))


def test_07_pearcey_kernel():
    verdict(checks.check_pearcey(shift_tol=1e-8, det_tol=1e-10, asym_tol=0.03))


def test_08_complex_cusp_universality():
    verdict(checks.check_gue_universality(N=1000, seeds=200, tol_sigma=3.0))


def test_09_real_cross_ensemble_universality():
    verdict(checks.check_goe_cross(N=1000, seeds=200))


def test_10_short_long_closeness():
    verdict(checks.check_short_long(N=200, factor=5.0))


def test_11_finite_speed_of_propagation():
    verdict(checks.check_finite_speed(N=400, threshold=1e-8))


def test_12_heat_kernel_decay():
    verdict(checks.check_heat_decay(N=400, p=5.0, target=-0.40, tol=0.08))


def test_13_operator_structure():
    verdict(checks.check_operator_structure(N=400, vectors=100, tol=1e-14))


def test_14_rigidity_exponent():
    verdict(checks.check_rigidity(sizes=(100, 200, 400), target=-0.75, tol=0.08))
