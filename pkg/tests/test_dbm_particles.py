import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspuni.dbm.noise import BrownianSource
from cuspuni.dbm.particles import (ParticleSystem, dyson_drift, implicit_neighbors, integrate, neighbor_drift,
                                   pad, pad_and_couple, padded_labels, real_mask, stable_dt, step)
from cuspuni.errors import IndexMismatch


def semicircle_cdf(x, variance):
    u = np.clip(np.asarray(x) / (2 * np.sqrt(variance)), -1, 1)
    return 0.5 + (u * np.sqrt(1 - u**2) + np.arcsin(u)) / np.pi


def semicircle_quantiles(N, variance=1.0):
    from scipy.optimize import brentq
    r = 2 * np.sqrt(variance)
    return np.array([brentq(lambda x: semicircle_cdf(x, variance) - (k - 0.5) / N, -r, r, xtol=1e-14)
                     for k in range(1, N + 1)])


def test_bridge_refinement_is_consistent():
    src = BrownianSource(7, 5)
    whole = src.increment(2, 3, (), 0.4)
    left, right = src.increment(2, 3, (0,), 0.2), src.increment(2, 3, (1,), 0.2)
    assert np.allclose(left + right, whole, atol=1e-15)
    quarters = [src.increment(2, 3, (1, k), 0.1) for k in (0, 1)]
    assert np.allclose(sum(quarters), right, atol=1e-15)
    assert np.array_equal(BrownianSource(7, 5).increment(2, 3, (0,), 0.2), left)


def test_bridge_halves_have_half_variance():
    halves = np.array([BrownianSource(s, 200).increment(0, 0, (0,), 0.5) for s in range(50)])
    assert np.var(halves) == pytest.approx(0.5, rel=0.05)


def test_zero_noise_two_particles_keep_center_of_mass():
    sys = ParticleSystem(np.array([-0.3, 0.3]), np.array([1, 2]), 2)
    for _ in range(50):
        sys = step(sys, 1e-3, zero_noise=True)
        assert abs(sys.positions.sum()) <= 1e-14
    assert sys.positions[1] > 0.3


def test_single_particle_is_brownian():
    N, t = 1, 0.1
    moves = np.array([step(ParticleSystem(np.zeros(1), np.array([1]), N, source=BrownianSource(s, 1)), t)
                      .positions[0] for s in range(10**4)])
    assert np.var(moves) == pytest.approx(2 * t / N, rel=0.05)


def test_flow_of_semicircle_quantiles_follows_free_convolution():
    N = 200
    t = N**-0.5
    z0 = semicircle_quantiles(N)
    src = BrownianSource(11, N)
    traj = integrate(z0[None, :], [0.0, t], dyson_drift(N), src, np.arange(N), N, stable_dt(z0, N, cap=t / 50))
    z = np.sort(traj.states[-1, 0])
    ecdf_hi = np.arange(1, N + 1) / N
    model = semicircle_cdf(z, 1.0 + t)
    dist = max(np.max(np.abs(ecdf_hi - model)), np.max(np.abs(ecdf_hi - 1 / N - model)))
    assert dist <= 0.03


def test_reruns_are_bit_identical():
    z0 = semicircle_quantiles(40)
    runs = [integrate(z0[None, :], [0, 0.01, 0.02], dyson_drift(40), BrownianSource(3, 40), np.arange(40), 40,
                      1e-3).states for _ in range(2)]
    assert np.array_equal(*runs)


@settings(max_examples=30)
@given(st.integers(0, 10**6), st.floats(1e-6, 1e-1))
def test_implicit_neighbour_step_is_ordered_and_stationary(seed, c):
    rng = np.random.default_rng(seed)
    start = np.sort(rng.standard_normal(12))
    y = start + 0.5 * rng.standard_normal(12)
    x = implicit_neighbors(y, start, c)
    assert np.all(np.diff(x) > 0)
    grad = x - y - neighbor_drift(x, c)
    assert np.max(np.abs(grad)) <= 1e-9 * max(1.0, np.max(np.abs(x)))


def test_pad_places_real_values_and_ghosts():
    lam = np.array([-1.0, 0.0, 2.0])
    out = pad(lam, 2, 3, 100.0)
    labels = padded_labels(3)
    assert list(labels) == [-3, -2, -1, 1, 2, 3]
    mask = real_mask(3, 2)
    assert np.array_equal(out[mask], lam)
    assert list(labels[mask]) == [-1, 1, 2]
    assert np.all(np.abs(out[~mask]) > 100.0)
    assert np.all(np.diff(out) > 0)


def test_pad_rejects_bad_input():
    with pytest.raises(IndexMismatch):
        pad(np.zeros(2), 1, 3, 100.0)
    with pytest.raises(IndexMismatch):
        pad(np.array([0.0, 1.0]), 4, 2, 100.0)
    with pytest.raises(IndexMismatch):
        pad(np.array([0.0, 80.0]), 1, 2, 100.0)


def test_identical_inputs_give_identical_paths():
    lam = semicircle_quantiles(30)
    x, y = pad_and_couple(lam, lam, 12, 12, seed=5)
    for _ in range(20):
        x, y = step(x, 1e-3), step(y, 1e-3)
    assert np.array_equal(x.positions, y.positions)


def test_padding_does_not_move_real_particles():
    N, i_band, dt, steps = 100, 37, 1e-3, 100   # t = 0.1 > N^{-1/2}
    lam = semicircle_quantiles(N)
    x, _ = pad_and_couple(lam, lam, i_band, i_band, seed=9)
    mask = real_mask(N, i_band)
    plain = ParticleSystem(lam, x.labels[mask], N, source=x.source, slots=np.nonzero(mask)[0])
    ghosts0 = x.positions[~mask].copy()
    for _ in range(steps):
        x, plain = step(x, dt), step(plain, dt)
    assert np.max(np.abs(x.positions[mask] - plain.positions)) <= 1e-6
    t = dt * steps
    assert np.max(np.abs(x.positions[~mask] - ghosts0)) <= 10 * (np.sqrt(t / N) + t)
