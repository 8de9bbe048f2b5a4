import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cuspuni.density import DensityProfile, scdos
from cuspuni.ensembles import reference_ensemble, semicircle
from cuspuni.errors import BadFit, DomainError
from cuspuni.shape import (CuspModel, EdgeModel, MinModel, classify_profile, model_density, model_profile,
                           psi_edge, psi_min)

mp.mp.dps = 60


def edge_oracle(lam):
    lam = mp.mpf(lam)
    r = mp.sqrt(lam * (1 + lam))
    return mp.sqrt(lam * (1 + lam)) / ((1 + 2 * lam + 2 * r) ** (mp.mpf(2) / 3)
                                        + (1 + 2 * lam - 2 * r) ** (mp.mpf(2) / 3) + 1)


def min_oracle(lam):
    lam = mp.mpf(lam)
    r = mp.sqrt(1 + lam**2)
    return r / ((r + lam) ** (mp.mpf(2) / 3) + (r - lam) ** (mp.mpf(2) / 3) - 1) - 1


@pytest.mark.parametrize("lam", [0.0, 1e-12, 1e-6, 0.3, 1.0, 17.0, 1e4, 1e8, 1e12])
def test_psi_edge_matches_high_precision_formula(lam):
    assert psi_edge(lam) == pytest.approx(float(edge_oracle(lam)), rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("lam", [0.0, 1e-8, 0.5, -3.7, 42.0, 1e6, -1e10, 1e12])
def test_psi_min_matches_high_precision_formula(lam):
    assert psi_min(lam) == pytest.approx(float(min_oracle(lam)), rel=1e-12, abs=1e-300)


def test_psi_edge_examples():
    assert psi_edge(0.0) == 0.0
    assert psi_edge(1e-6) == pytest.approx(3.3333e-4, abs=1e-7)
    delta, omega = 1e-9, 1.0
    assert delta ** (1 / 3) * psi_edge(omega / delta) == pytest.approx(2 ** (-4 / 3), abs=1e-3)
    with pytest.raises(DomainError):
        psi_edge(-1e-3)


def test_psi_min_examples():
    assert psi_min(0.0) == 0.0
    assert psi_min(3.7) == pytest.approx(psi_min(-3.7), abs=1e-12)


def test_psi_min_large_argument_asymptote():
    # Psi_min grows like lam^{1/3} / 2^{2/3} with an O(lam^{-1/3}) relative correction
    for lam in (1e6, 4e6, 1e9):
        ratio = psi_min(lam) / lam ** (1 / 3)
        assert ratio == pytest.approx(2 ** (-2 / 3), rel=2 * (2 * lam) ** (-1 / 3))


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_psi_edge_monotone(a, b):
    lo, hi = sorted((a, b))
    assert psi_edge(lo) <= psi_edge(hi)


@given(st.floats(-1e8, 1e8))
def test_psi_min_even_and_minimal_at_zero(lam):
    assert psi_min(lam) == psi_min(-lam)
    assert psi_min(lam) >= psi_min(0.0)


@given(st.floats(1e-3, 1e3), st.floats(0, 1e-2))
def test_psi_edge_scaling_constant(lam, eps):
    assert psi_edge((1 + eps) * lam) <= psi_edge(lam) * (1 + 2 * eps) + 1e-15


def test_no_overflow_at_huge_arguments():
    lam = np.logspace(-12, 12, 100)
    assert np.all(np.isfinite(psi_edge(lam))) and np.all(psi_edge(lam[1:]) > 0)
    assert np.all(np.isfinite(psi_min(lam))) and np.all(psi_min(lam) > 0)


def test_model_density_examples():
    assert model_density(CuspModel(1.0), 1.0) == pytest.approx(0.27566, abs=1e-5)
    assert model_density(MinModel(0.01, 1.0), 0.0) == 0.01
    edge = model_density(EdgeModel(1e-6, 1.0), 1e-2)
    cusp = model_density(CuspModel(1.0), 1e-2)
    assert abs(edge / cusp - 1) <= 1e-2


def test_models_match_at_large_argument():
    omegas = np.array([1e-3, 1e-2, 1e-1])
    errs = np.abs(model_density(EdgeModel(1e-6, 1.0), omegas) / model_density(CuspModel(1.0), omegas) - 1)
    assert np.all(np.diff(errs) < 0)
    errs = np.abs(model_density(MinModel(1e-3, 1.0), omegas) / model_density(CuspModel(1.0), omegas) - 1)
    assert np.all(np.diff(errs) < 0)


def test_model_parameters_must_be_positive():
    with pytest.raises(DomainError):
        CuspModel(0.0)
    with pytest.raises(DomainError):
        EdgeModel(-1.0, 1.0)
    with pytest.raises(DomainError):
        MinModel(1.0, 0.0)


def test_classify_synthetic_edge(rng):
    model = EdgeModel(1e-4, 1.0, location=5e-5)
    x = np.unique(np.concatenate([np.linspace(-2e-2, 2e-2, 801), np.linspace(-1e-4, 1e-4, 201)]))
    y = model_profile(model, x) * (1 + 1e-3 * rng.standard_normal(x.size))
    res = classify_profile(DensityProfile(x, np.maximum(y, 0)), (-2e-2, 2e-2))
    assert isinstance(res.model, EdgeModel)
    assert res.model.delta == pytest.approx(1e-4, rel=0.02)
    assert res.model.gamma == pytest.approx(1.0, rel=0.02)


def test_classify_reference_cusp():
    prof = scdos(reference_ensemble(2, 0.0), (-0.02, 0.02), resolution=1e-7)
    res = classify_profile(prof, (-0.02, 0.02))
    # smoothing at scale eta lifts the exact cusp to a minimum of height O(eta^{1/3})
    assert isinstance(res.model, (CuspModel, MinModel))
    if isinstance(res.model, MinModel):
        assert res.model.rho_m < (1e-7) ** (1 / 3)
    assert res.model.gamma == pytest.approx(1.0, rel=0.02)
    assert abs(res.model.location) < 1e-6


def test_classify_bulk_window_is_bad_fit():
    prof = scdos(semicircle(10), (-0.5, 0.5), resolution=1e-4)
    with pytest.raises(BadFit):
        classify_profile(prof, (-0.5, 0.5))
