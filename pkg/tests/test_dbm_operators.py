import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from cuspuni.dbm.operators import (DiscreteOperator, OperatorKind, build_operator, finite_speed_check,
                                   heat_decay_check, propagate_heat, sobolev_ratio)
from cuspuni.dbm.shortrange import ShortRangeSet
from cuspuni.errors import DomainError, ZeroVector

N = 40


@pytest.fixture(scope="module")
def snapshot():
    rng = np.random.default_rng(0)
    sr = ShortRangeSet(N)
    z = np.sort(rng.standard_normal(2 * N)) + np.linspace(0, 1, 2 * N)
    potential = -np.abs(rng.standard_normal(2 * N))
    return sr, z, potential


def test_B_annihilates_constants_and_is_negative(snapshot):
    sr, z, _ = snapshot
    op = build_operator(z, sr, None, 0.0)
    assert np.max(np.abs(op.apply_B(np.ones(z.size)))) <= 1e-14 * np.abs(op.dense()).max()
    rng = np.random.default_rng(1)
    assert all(f @ op.apply_B(f) <= 0 for f in rng.standard_normal((100, z.size)))
    C = op.coefficients()
    assert np.array_equal(C, C.T)
    assert np.all(C[sr.mask] < 0) and np.all(C[~sr.mask] == 0)


def test_dense_matches_apply(snapshot):
    sr, z, V = snapshot
    op = DiscreteOperator(z, sr.mask, V, N)
    f = np.random.default_rng(2).standard_normal(z.size)
    for kind in OperatorKind:
        o = op.with_kind(kind)
        assert np.allclose(o.dense() @ f, o.apply(f), rtol=1e-12, atol=1e-12 * np.abs(o.dense()).max())


def static(op):
    return lambda t: op


def test_heat_flow_keeps_constants(snapshot):
    sr, z, _ = snapshot
    op = DiscreteOperator(z, sr.mask, np.zeros(z.size), N)
    w, _ = propagate_heat(static(op), np.full(z.size, 3.0), 0.0, 0.05)
    assert np.allclose(w, 3.0, atol=1e-10)


def test_heat_flow_matches_matrix_exponential(snapshot):
    sr, z, V = snapshot
    op = DiscreteOperator(z, sr.mask, V, N)
    w0 = np.random.default_rng(3).standard_normal(z.size)
    w, rec = propagate_heat(static(op), w0, 0.0, 0.02, rtol=1e-10, atol=1e-14)
    exact = sla.expm(0.02 * op.dense()) @ w0
    assert np.allclose(w, exact, atol=1e-7 * np.abs(w0).max())
    assert max(rec.linf) <= np.abs(w0).max() * (1 + 1e-8)
    assert np.all(np.diff(rec.l1) <= 1e-8 * rec.l1[0])


def test_heat_flow_rejects_backwards_time(snapshot):
    sr, z, V = snapshot
    with pytest.raises(ValueError):
        propagate_heat(static(DiscreteOperator(z, sr.mask, V, N)), np.ones(z.size), 1.0, 0.5)


def test_no_decay_at_tiny_times(snapshot):
    sr, z, _ = snapshot
    op = DiscreteOperator(z, sr.mask, np.zeros(z.size), N)
    labels = sr.labels
    fit = heat_decay_check(static(op), 5.0, 5, labels, np.ones(labels.size, bool), N, t_window=(1e-12, 1e-11))
    assert fit.exponent == pytest.approx(0.0, abs=1e-3)
    assert np.allclose(fit.ratios, 1.0, atol=1e-3)


def test_finite_speed_needs_a_distant_label(snapshot):
    sr, z, V = snapshot
    op = DiscreteOperator(z, sr.mask, V, N)
    with pytest.raises(DomainError):
        finite_speed_check(static(op), sr.labels, np.ones(z.size, bool), ell=10, N=N, t=0.01)


def test_sobolev_delta_example():
    eta = 0.1
    j = np.arange(2, 10**6 + 1, dtype=float)
    direct = 2 * np.sum((j**0.75 - 1) ** -(2 - eta))
    got = sobolev_ratio(np.array([1.0]), eta)
    # the tail beyond 1e6 is positive and small
    assert direct < got < direct * 1.01
    assert sobolev_ratio(np.array([1.0]), eta, tail_cut=1000) == pytest.approx(got, rel=1e-8)


def test_sobolev_energy_diverges_at_the_endpoint():
    assert sobolev_ratio(np.array([1.0, 0.5]), 2 / 3) == np.inf


@settings(max_examples=20)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.floats(0.05, 0.6))
def test_sobolev_homogeneity(vals, eta):
    u = np.array(vals)
    if not np.any(u):
        u[0] = 1.0
    assert sobolev_ratio(2 * u, eta) == pytest.approx(sobolev_ratio(u, eta), rel=1e-10)


def test_sobolev_lower_bound_on_random_sparse_vectors():
    rng = np.random.default_rng(4)
    worst = np.inf
    for _ in range(1000):
        u = np.zeros(60)
        idx = rng.choice(60, size=rng.integers(1, 6), replace=False)
        u[idx] = rng.standard_normal(idx.size)
        worst = min(worst, sobolev_ratio(u, 0.1, tail_cut=2000))
    assert worst >= 0.05


def test_sobolev_rejects_bad_input():
    with pytest.raises(ZeroVector):
        sobolev_ratio(np.zeros(3), 0.1)
    with pytest.raises(DomainError):
        sobolev_ratio(np.ones(3), 0.9)
