import numpy as np
import pytest
from hypothesis import given, strategies as st

from cuspuni.density import DensityProfile
from cuspuni.errors import DomainError, KindMismatch, OutOfRange
from cuspuni.quantiles import (InterpMode, Mode, counting, fluctuation_scale, interpolate, interpolation_error,
                               quantile, quantile_set)
from cuspuni.shape import CuspModel, EdgeModel, MinModel, model_profile

CUSP_MASS = 3 * np.sqrt(3) / (8 * np.pi)  # n(E) = CUSP_MASS * E^{4/3} for the slope-1 cusp


def model_density_profile(model, lo=-0.5, hi=0.5, points=2001, extra=()):
    grid = np.unique(np.concatenate([np.linspace(lo, hi, points), np.asarray(extra, dtype=float)]))
    fn = lambda x: model_profile(model, x)  # noqa: E731
    support = ()
    if isinstance(model, EdgeModel):
        support = [(lo, model.location - model.delta), (model.location, hi)]
    return DensityProfile(grid, fn(grid), density=fn, support=support)


@pytest.fixture(scope="module")
def cusp():
    return model_density_profile(CuspModel(1.0), extra=[0.0])


def uniform(c=0.5, lo=-1.0, hi=1.0):
    return DensityProfile(np.linspace(lo, hi, 11), np.full(11, c), density=lambda x: np.full(np.shape(x), c))


def test_counting_examples(cusp):
    assert counting(cusp, 0.0, 0.0) == 0.0
    assert counting(cusp, 0.0, 1e-2) == pytest.approx(4.454e-4, abs=1e-7)
    E = np.array([1e-6, 1e-3, 0.3, -0.2])
    assert np.allclose(counting(cusp, 0.0, E), np.sign(E) * CUSP_MASS * np.abs(E) ** (4 / 3), rtol=1e-10)


def test_counting_outside_hull(cusp):
    with pytest.raises(OutOfRange):
        counting(cusp, 0.0, 2.0)


def test_edge_counting_branches():
    delta = 1e-6
    prof = model_density_profile(EdgeModel(delta, 1.0), lo=-0.2, hi=0.2, extra=[0.0, -delta])
    small, large = 1e-9, 1e-2
    assert counting(prof, 0.0, small) / (small**1.5 / delta ** (1 / 6)) == pytest.approx(
        counting(prof, 0.0, 2 * small) / ((2 * small) ** 1.5 / delta ** (1 / 6)), rel=1e-2)
    assert counting(prof, 0.0, large) == pytest.approx(CUSP_MASS * large ** (4 / 3), rel=2e-2)


def test_quantile_examples(cusp):
    assert quantile(cusp, 0.0, 0, 10**6) == 0.0
    q = quantile(cusp, 0.0, 100, 10**6)
    # (8 pi / (3 sqrt 3))^{3/4} = 3.26151 exactly to six digits
    assert q == pytest.approx(3.26151e-3, abs=1e-8)
    assert q == pytest.approx((1e-4 / CUSP_MASS) ** 0.75, rel=1e-12)


def test_quantile_roundtrip(cusp):
    N = 10**6
    qs = quantile_set(cusp, 0.0, N, 300)
    mass = counting(cusp, 0.0, qs.gamma_hat)
    assert np.allclose(mass, qs.indices / N, rtol=1e-10, atol=0)


def test_quantile_set_ordering(cusp):
    qs = quantile_set(cusp, 0.0, 10**5, 50)
    assert np.all(np.diff(qs.gamma_hat) > 0) and np.all(np.diff(qs.gamma_star) > 0)
    pos = qs.indices > 0
    hat = dict(zip(qs.indices, qs.gamma_hat))
    hat[0] = 0.0
    for i, g in zip(qs.indices, qs.gamma_star):
        lo, hi = (hat[i - 1], hat[i]) if i > 0 else (hat[i], hat[i + 1])
        assert lo < g < hi
    assert np.all(cusp.density(qs.gamma_star) > 0)
    assert pos.sum() == 50


def test_semiquantile_index_zero_rejected(cusp):
    with pytest.raises(DomainError):
        quantile(cusp, 0.0, 0, 100, Mode.SEMIQUANTILE)


def test_quantile_needs_enough_mass(cusp):
    with pytest.raises(OutOfRange):
        quantile(cusp, 0.0, 10, 10)


@given(st.floats(0.1, 5.0), st.integers(10, 10**6))
def test_uniform_fluctuation_scale(c, N):
    prof = uniform(c, -10.0, 10.0)
    assert fluctuation_scale(prof, 0.3, N).eta_f == pytest.approx(1 / (2 * c * N), rel=1e-10)


def test_minimum_fluctuation_scale():
    rho_m = 0.05
    prof = model_density_profile(MinModel(rho_m, 1.0), extra=[0.0])
    N = 10**6
    assert fluctuation_scale(prof, 0.0, N).eta_f == pytest.approx(1 / (2 * N * rho_m), rel=0.05)


def test_fluctuation_scale_snaps_into_support():
    prof = model_density_profile(EdgeModel(1e-3, 1.0), lo=-0.2, hi=0.2, extra=[0.0, -1e-3])
    inside_gap = fluctuation_scale(prof, -0.4e-3, 10**4).eta_f
    at_left = fluctuation_scale(prof, -1e-3, 10**4).eta_f
    assert inside_gap == at_left
    with pytest.raises(OutOfRange):
        fluctuation_scale(prof, 1.0, 10)


def test_cusp_fluctuation_exponent(cusp):
    N = 10**8
    idx = np.geomspace(10, 1000, 7).astype(int)
    eta = [fluctuation_scale(cusp, x, N).eta_f for x in quantile(cusp, 0.0, idx, N)]
    slope = np.polyfit(np.log(idx), np.log(eta), 1)[0]
    assert slope == pytest.approx(-0.25, abs=0.02)


@pytest.fixture(scope="module")
def gap_pair():
    x = model_density_profile(EdgeModel(1e-3, 1.0), lo=-0.2, hi=0.2, extra=[0.0, -1e-3])
    y = model_density_profile(EdgeModel(4e-3, 1.5, location=1e-3), lo=-0.2, hi=0.2, extra=[1e-3, -3e-3])
    return x, y


def test_interpolation_endpoint_reproduces_input(gap_pair):
    x, y = gap_pair
    interp = interpolate(x, y, 1.0, InterpMode.GAP, 0.0, 1e-3, tabulate=False)
    E = np.array([-0.05, -2e-3, 1e-4, 0.03])
    assert np.allclose(interp.density(E), x.density(E), rtol=1e-10, atol=1e-12)


def test_interpolation_of_equal_densities_is_identity():
    x = model_density_profile(MinModel(0.02, 1.0), extra=[0.0])
    for alpha in (0.25, 0.5):
        interp = interpolate(x, x, alpha, InterpMode.MIN, 0.0, 0.0, tabulate=False)
        E = np.array([-0.1, -1e-3, 0.0, 2e-3, 0.2])
        assert np.allclose(interp.density(E), x.density(E), rtol=1e-10)


@pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_interpolated_quantiles_are_convex_combinations(gap_pair, alpha):
    x, y = gap_pair
    interp = interpolate(x, y, alpha, InterpMode.GAP, 0.0, 1e-3)
    assert interpolation_error(interp, 10**5, 200) <= 1e-9


def test_gap_interpolation_edges_combine(gap_pair):
    x, y = gap_pair
    interp = interpolate(x, y, 0.5, InterpMode.GAP, 0.0, 1e-3)
    assert interp.edges[1] == pytest.approx(0.5e-3, abs=1e-15)
    assert interp.edges[0] == pytest.approx(0.5 * (-1e-3) + 0.5 * (-3e-3), abs=1e-12)
    assert interp.density(np.array([-1e-3]))[0] == 0.0


def test_kind_mismatch():
    x = model_density_profile(MinModel(0.02, 1.0), extra=[0.0])
    y = model_density_profile(EdgeModel(1e-3, 1.0), extra=[0.0, -1e-3])
    with pytest.raises(KindMismatch):
        interpolate(x, y, 0.5, InterpMode.GAP, 0.0, 0.0)
    with pytest.raises(DomainError):
        interpolate(x, x, 1.5, InterpMode.MIN, 0.0, 0.0)
